use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::ke::{attribute_key, relex, row_assignment, GoalQuery, KeError, Placeholder, Template};
use crate::kb::TableKb;
use crate::tquery::{self, values_equal, Selection, TableQuery};

use super::{GenError, GenerationConfig, GeneratedCorpus, GeneratedDialogue, GroupSource, Provenance, TemplateStats};

fn template_error(t: &Template, source: impl Into<KeError>) -> GenError {
    GenError::Template {
        id: t.id.clone(),
        source: source.into(),
    }
}

fn table_query(t: &Template) -> Result<TableQuery, GenError> {
    match t.goal_query().map_err(|e| template_error(t, e))? {
        GoalQuery::Table(q) => Ok(q),
        GoalQuery::Graph(_) => Err(template_error(
            t,
            KeError::InvalidTemplate {
                id: t.id.clone(),
                reason: "expected a table query".into(),
            },
        )),
    }
}

/// The plan for filling one template: which group follows the query
/// results, and where every other group draws its rows from.
struct Plan {
    primary: u32,
    /// (group, draws from query results rather than the whole KB)
    secondary: Vec<(u32, bool)>,
    /// Group pairs that must receive different values for an attribute,
    /// because their source surfaces differed.
    distinct: Vec<(u32, u32, usize)>,
}

fn plan(t: &Template, q: &TableQuery, kb: &TableKb, results: &BTreeSet<usize>) -> Option<Plan> {
    let group_attrs = t.group_attrs();
    if group_attrs.is_empty() {
        return None;
    }
    let select: Vec<String> = match &q.select {
        Selection::All => kb.attributes().to_vec(),
        Selection::Attributes(a) => a.clone(),
    };
    let attr_index = |key: &str| kb.attributes().iter().position(|a| attribute_key(a) == key);
    // Rows matching every source value of a group.
    let source_rows = |g: u32, attrs: &BTreeSet<String>| -> BTreeSet<usize> {
        (0..kb.len())
            .filter(|&r| {
                attrs.iter().all(|key| {
                    match (attr_index(key), t.binding.get(&Placeholder::new(key.clone(), g))) {
                        (Some(i), Some(surface)) => values_equal(&kb.rows()[r][i], surface),
                        _ => true,
                    }
                })
            })
            .collect()
    };
    let consistent: BTreeMap<u32, bool> = group_attrs
        .iter()
        .map(|(&g, attrs)| (g, !source_rows(g, attrs).is_disjoint(results)))
        .collect();
    // Lowest group holding the first selected attribute, preferring groups
    // whose source instance satisfies the query.
    let holding = |key: &str, need_consistent: bool| {
        group_attrs
            .iter()
            .find(|(g, attrs)| attrs.contains(key) && (!need_consistent || consistent[*g]))
            .map(|(&g, _)| g)
    };
    let keys: Vec<String> = select.iter().map(|a| attribute_key(a)).collect();
    let primary = keys
        .iter()
        .find_map(|k| holding(k, true))
        .or_else(|| keys.iter().find_map(|k| holding(k, false)))
        .unwrap_or(*group_attrs.keys().next().expect("non-empty"));
    let secondary = group_attrs
        .keys()
        .filter(|&&g| g != primary)
        .map(|&g| (g, consistent[&g]))
        .collect();

    let mut distinct = Vec::new();
    let groups: Vec<(&u32, &BTreeSet<String>)> = group_attrs.iter().collect();
    for (i, (&g, ga)) in groups.iter().enumerate() {
        for (&h, ha) in &groups[i + 1..] {
            for key in ga.intersection(ha) {
                let (Some(idx), Some(a), Some(b)) = (
                    attr_index(key),
                    t.binding.get(&Placeholder::new(key.clone(), g)),
                    t.binding.get(&Placeholder::new(key.clone(), h)),
                ) else {
                    continue;
                };
                if !values_equal(a, b) {
                    distinct.push((g, h, idx));
                }
            }
        }
    }
    Some(Plan {
        primary,
        secondary,
        distinct,
    })
}

fn generate_one(t: &Template, kb: &TableKb, cfg: &GenerationConfig) -> Result<(Vec<GeneratedDialogue>, TemplateStats), GenError> {
    let q = table_query(t)?;
    t.validate(Some(kb)).map_err(|e| template_error(t, e))?;
    let results = tquery::execute(&q, kb).map_err(|e| template_error(t, e))?;
    let mut result_rows = results.row_indices;
    if let Some(cap) = cfg.result_cap {
        result_rows.truncate(cap);
    }
    let mut stats = TemplateStats {
        template: t.id.clone(),
        ..Default::default()
    };
    let result_set: BTreeSet<usize> = result_rows.iter().copied().collect();
    let Some(plan) = plan(t, &q, kb, &result_set) else {
        log::warn!("template {} has no placeholders; nothing to generate", t.id);
        return Ok((Vec::new(), stats));
    };
    let all_rows: Vec<usize> = (0..kb.len()).collect();

    let mut out = Vec::new();
    for (i, &row) in result_rows.iter().enumerate() {
        let mut chosen: BTreeMap<u32, usize> = BTreeMap::from([(plan.primary, row)]);
        let mut complete = true;
        for (k, &(g, from_results)) in plan.secondary.iter().enumerate() {
            let pool = if from_results { &result_rows } else { &all_rows };
            let start = i + k + 1;
            let pick = (0..pool.len()).map(|j| pool[(start + j) % pool.len()]).find(|&r| {
                !chosen.values().any(|&c| c == r)
                    && plan.distinct.iter().all(|&(a, b, idx)| {
                        let other = if a == g {
                            b
                        } else if b == g {
                            a
                        } else {
                            return true;
                        };
                        chosen
                            .get(&other)
                            .is_none_or(|&o| !values_equal(&kb.rows()[o][idx], &kb.rows()[r][idx]))
                    })
            });
            match pick {
                Some(r) => {
                    chosen.insert(g, r);
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            stats.skipped += 1;
            continue;
        }
        let assignment = row_assignment(kb, &chosen);
        let dialogue = relex(t, &assignment, format!("{}-{}", t.id, i)).map_err(|e| template_error(t, e))?;
        out.push(GeneratedDialogue {
            dialogue,
            provenance: Provenance {
                template: t.id.clone(),
                result_index: i,
                assignment: chosen.into_iter().map(|(g, r)| (g, GroupSource::Row(r))).collect(),
                sample: None,
                iteration: None,
            },
        });
    }
    stats.generated = out.len();
    Ok((out, stats))
}

/// Relexicalizes every template over its query results.
///
/// The primary group (the lowest group holding the query's first selected
/// attribute, preferring groups whose source instance satisfies the query)
/// takes each result row in turn, so a single-group template
/// yields exactly one dialogue per result row. Other groups take the next
/// rows cyclically: from the query results when their source instance
/// satisfied the query, otherwise from the whole KB. Rows are never reused
/// within a dialogue, and groups whose source values differed get differing
/// values; results with no such assignment are skipped.
pub fn generate_table(templates: &[Template], kb: &TableKb, cfg: &GenerationConfig) -> Result<GeneratedCorpus, GenError> {
    let parts: Vec<_> = templates
        .par_iter()
        .map(|t| generate_one(t, kb, cfg))
        .collect::<Result<_, _>>()?;
    let mut corpus = GeneratedCorpus::default();
    for (dialogues, stats) in parts {
        corpus.dialogues.extend(dialogues);
        corpus.stats.push(stats);
    }
    Ok(corpus)
}

/// Per-sample generation (one KB per test sample). Only templates whose
/// query targets the sample KB's table are used. Dialogue ids are prefixed
/// with the sample id. A failing sample does not affect the others.
pub fn generate_per_kb(
    templates: &[Template],
    kbs: &[(String, TableKb)],
    cfg: &GenerationConfig,
) -> BTreeMap<String, Result<GeneratedCorpus, GenError>> {
    kbs.par_iter()
        .map(|(sample, kb)| {
            let applicable: Vec<Template> = templates
                .iter()
                .filter(|t| matches!(table_query(t), Ok(q) if q.from.eq_ignore_ascii_case(kb.name())))
                .cloned()
                .collect();
            let result = generate_table(&applicable, kb, cfg).map(|mut corpus| {
                for g in &mut corpus.dialogues {
                    g.dialogue.id = format!("{sample}-{}", g.dialogue.id);
                    g.provenance.sample = Some(sample.clone());
                }
                corpus
            });
            (sample.clone(), result)
        })
        .collect()
}

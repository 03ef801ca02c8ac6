use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use crate::gquery::derive_query_from_dialogue;
use crate::kb::{Dialogue, EntityLexicon, GraphKb, Speaker, TableKb, Turn};
use crate::tquery::{self, values_equal};

use super::{attribute_key, find_placeholders, BindingMap, KeError, Placeholder, Template};

/// One resolved entity mention.
struct Mention {
    turn: usize,
    span: Range<usize>,
    surface: String,
    /// KB attribute name.
    attr: String,
    /// KB spelling of the value.
    value: String,
    /// KB rows holding `value` under `attr`.
    rows: BTreeSet<usize>,
}

struct Group {
    values: BTreeMap<String, String>,
    rows: BTreeSet<usize>,
}

impl Group {
    /// A mention joins a group that already holds the same value for its
    /// attribute, or that lacks the attribute and shares a KB row with it.
    fn admits(&self, m: &Mention) -> bool {
        match self.values.get(&m.attr) {
            Some(v) => values_equal(v, &m.value),
            None => !self.rows.is_disjoint(&m.rows),
        }
    }

    fn absorb(&mut self, m: &Mention) {
        if !self.values.contains_key(&m.attr) {
            self.values.insert(m.attr.clone(), m.value.clone());
            self.rows = self.rows.intersection(&m.rows).copied().collect();
        }
    }
}

fn masked_ranges(text: &str) -> Vec<Range<usize>> {
    find_placeholders(text).into_iter().map(|(r, _)| r).collect()
}

fn rows_with(kb: &TableKb, attr_idx: usize, value: &str, among: impl Iterator<Item = usize>) -> BTreeSet<usize> {
    among
        .filter(|&r| kb.rows()[r].get(attr_idx).is_some_and(|v| values_equal(v, value)))
        .collect()
}

/// Delexicalizes a dialogue against a table KB.
///
/// Mentions found by `lexicon` are tied to an attribute of the query's
/// effective attribute list. Mentions are then grouped by KB instance:
/// walking the turns backwards, each mention joins a group it is
/// consistent with (preferring groups already mentioned in the same turn,
/// then groups holding the same value, then the earliest created), so the
/// final mention of a repeated slot binds to the instance the dialogue
/// settles on. Groups are numbered from 0 in order of first mention. API turns are copied verbatim.
pub fn delex_table(
    dialogue: &Dialogue,
    query: &str,
    kb: &TableKb,
    lexicon: &EntityLexicon,
) -> Result<Template, KeError> {
    let q = tquery::parse(query)?;
    let results = tquery::execute(&q, kb)?;
    let effective = q.effective_attributes(kb)?;

    let mut mentions: Vec<Mention> = Vec::new();
    for (ti, turn) in dialogue.turns().iter().enumerate() {
        if turn.speaker == Speaker::Api {
            continue;
        }
        let text = turn.text();
        for m in lexicon.match_entities_masked(text, &masked_ranges(text)) {
            let attrs: Vec<&String> = effective
                .iter()
                .filter(|a| m.tags.iter().any(|t| t.eq_ignore_ascii_case(a)))
                .collect();
            let attr = match attrs.as_slice() {
                [] => {
                    log::warn!(
                        "{}: `{}` is not an attribute of the query; left as is",
                        dialogue.id,
                        m.surface
                    );
                    continue;
                }
                [only] => (*only).clone(),
                several => {
                    let in_results: Vec<&&String> = several
                        .iter()
                        .filter(|a| {
                            let idx = kb.attribute_index(a).expect("effective attribute");
                            !rows_with(kb, idx, &m.canonical, results.row_indices.iter().copied()).is_empty()
                        })
                        .collect();
                    match in_results.as_slice() {
                        [only] => (**only).clone(),
                        _ => {
                            return Err(KeError::AmbiguousEntity {
                                surface: m.surface,
                                candidates: several.iter().map(|a| a.to_string()).collect(),
                            })
                        }
                    }
                }
            };
            let idx = kb.attribute_index(&attr).expect("effective attribute");
            let rows = rows_with(kb, idx, &m.canonical, 0..kb.len());
            let value = rows
                .first()
                .map(|&r| kb.rows()[r][idx].clone())
                .unwrap_or_else(|| m.canonical.clone());
            mentions.push(Mention {
                turn: ti,
                span: m.span,
                surface: m.surface,
                attr,
                value,
                rows,
            });
        }
    }

    // Turns are visited last to first; within a turn, left to right so the
    // subject of a sentence anchors its group.
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(mentions[i].turn), i));
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of: Vec<Option<usize>> = vec![None; mentions.len()];
    for mi in order {
        let m = &mentions[mi];
        let same_turn = |g: usize| {
            mentions
                .iter()
                .zip(&group_of)
                .any(|(o, &og)| o.turn == m.turn && og == Some(g))
        };
        let admitting: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].admits(m)).collect();
        let chosen = admitting
            .iter()
            .copied()
            .find(|&g| same_turn(g))
            .or_else(|| {
                admitting.iter().copied().find(|&g| {
                    groups[g].values.get(&m.attr).is_some_and(|v| values_equal(v, &m.value))
                })
            })
            .or_else(|| admitting.first().copied());
        let g = match chosen {
            Some(g) => g,
            None => {
                groups.push(Group {
                    values: BTreeMap::new(),
                    rows: m.rows.clone(),
                });
                groups.len() - 1
            }
        };
        groups[g].absorb(m);
        group_of[mi] = Some(g);
    }
    let group_of: Vec<usize> = group_of.into_iter().map(|g| g.expect("every mention grouped")).collect();
    let mut renumber: HashMap<usize, u32> = HashMap::new();
    for &g in &group_of {
        let next = renumber.len() as u32;
        renumber.entry(g).or_insert(next);
    }

    let placeholders: Vec<Placeholder> = mentions
        .iter()
        .zip(&group_of)
        .map(|(m, g)| Placeholder::new(attribute_key(&m.attr), renumber[g]))
        .collect();
    let spans = mentions
        .iter()
        .zip(placeholders)
        .map(|(m, p)| (m.turn, m.span.clone(), m.surface.clone(), p));
    build_template(dialogue, q.to_string(), spans)
}

/// Delexicalizes a dialogue against a graph KB. The goal query is induced
/// from the mentioned entities; every mention of a bound node becomes
/// `[n<k>_0]`.
pub fn delex_graph(dialogue: &Dialogue, graph: &GraphKb, lexicon: &EntityLexicon) -> Result<Template, KeError> {
    let derived = derive_query_from_dialogue(dialogue, graph, lexicon)?;
    if derived.partial {
        log::warn!(
            "{}: some entities are unreachable from the rest and stay lexicalized",
            dialogue.id
        );
    }
    let slot_of: HashMap<&str, String> = derived
        .binding
        .iter()
        .map(|(s, n)| (n.as_str(), s.to_string()))
        .collect();
    let mut spans = Vec::new();
    for (ti, turn) in dialogue.turns().iter().enumerate() {
        if turn.speaker == Speaker::Api {
            continue;
        }
        let text = turn.text();
        for m in lexicon.match_entities_masked(text, &masked_ranges(text)) {
            if let Some(slot) = slot_of.get(m.canonical.as_str()) {
                spans.push((ti, m.span, m.surface, Placeholder::new(slot.clone(), 0)));
            }
        }
    }
    build_template(dialogue, derived.query.to_string(), spans.into_iter())
}

fn build_template(
    dialogue: &Dialogue,
    query: String,
    spans: impl Iterator<Item = (usize, Range<usize>, String, Placeholder)>,
) -> Result<Template, KeError> {
    let mut per_turn: BTreeMap<usize, Vec<(Range<usize>, Placeholder)>> = BTreeMap::new();
    let mut binding = BindingMap::new();
    for (turn, span, surface, p) in spans {
        if binding.get(&p).is_none() {
            binding.insert(&p, surface);
        }
        per_turn.entry(turn).or_default().push((span, p));
    }
    let mut turns = Vec::with_capacity(dialogue.turns().len());
    for (ti, turn) in dialogue.turns().iter().enumerate() {
        let mut text = turn.text().to_string();
        if let Some(list) = per_turn.get_mut(&ti) {
            list.sort_by_key(|(span, _)| std::cmp::Reverse(span.start));
            for (span, p) in list.iter() {
                text.replace_range(span.clone(), &p.to_string());
            }
        }
        turns.push(Turn::new(turn.speaker, &text).expect("non-empty turn"));
    }
    Ok(Template {
        id: dialogue.id.clone(),
        query,
        turns,
        binding,
    })
}

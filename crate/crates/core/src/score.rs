//! Evaluation metrics over generated responses.
//!
//! Entity F1 and BLEU read SYS turns only (API calls are excluded);
//! response/dialogue accuracy reads every system-side turn, API calls
//! included.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::kb::{is_word_char, normalize_ws, Dialogue, Direction, EntityLexicon, GraphKb, Speaker, TableKb};
use crate::tquery::{self, QueryError, Selection};

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("{what}: {pred} predicted vs {gold} gold")]
    LengthMismatch {
        what: &'static str,
        pred: usize,
        gold: usize,
    },
    #[error("dialogue {index}: predicted `{pred}` is aligned with gold `{gold}`")]
    Misaligned { index: usize, pred: String, gold: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no goal for dialogue `{0}`")]
    MissingGoal(String),
    #[error("goal of dialogue `{id}`: {source}")]
    Goal {
        id: String,
        #[source]
        source: QueryError,
    },
    #[error("metric `{metric}` needs {needs}")]
    MissingInput { metric: Metric, needs: &'static str },
    #[error("KB has no name attribute `{0}`")]
    UnknownNameAttribute(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

fn check_len(what: &'static str, pred: usize, gold: usize) -> Result<(), ScoreError> {
    if pred != gold {
        return Err(ScoreError::LengthMismatch { what, pred, gold });
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EntityF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn entity_set(lexicon: &EntityLexicon, text: &str) -> BTreeSet<String> {
    lexicon
        .match_entities(text)
        .into_iter()
        .map(|m| m.canonical)
        .collect()
}

/// Micro-averaged entity precision, recall and F1 over aligned responses.
pub fn entity_f1<P: AsRef<str>, G: AsRef<str>>(
    pred: &[P],
    gold: &[G],
    lexicon: &EntityLexicon,
) -> Result<EntityF1, ScoreError> {
    check_len("responses", pred.len(), gold.len())?;
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let p = entity_set(lexicon, p.as_ref());
        let g = entity_set(lexicon, g.as_ref());
        let hit = p.intersection(&g).count();
        tp += hit;
        fp += p.len() - hit;
        fneg += g.len() - hit;
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EntityF1 {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
    })
}

pub const BLEU_EPSILON: f64 = 1e-9;

fn ngram_counts<'s, 'a>(tokens: &'s [&'a str], n: usize) -> HashMap<&'s [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 with uniform weights over whitespace tokens.
///
/// Clipped n-gram matches and candidate n-gram totals are summed over the
/// corpus. Orders for which the candidates contain no n-grams at all are
/// left out of the geometric mean; an order with candidates but no matches
/// gets precision `ε / total`. The brevity penalty is `exp(1 - r/c)` when
/// the candidate corpus is shorter than the references.
pub fn bleu<P: AsRef<str>, G: AsRef<str>>(pred: &[P], refs: &[G]) -> Result<f64, ScoreError> {
    check_len("responses", pred.len(), refs.len())?;
    if pred.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (p, r) in pred.iter().zip(refs) {
        let p: Vec<&str> = p.as_ref().split_whitespace().collect();
        let r: Vec<&str> = r.as_ref().split_whitespace().collect();
        cand_len += p.len();
        ref_len += r.len();
        for n in 1..=4 {
            let pc = ngram_counts(&p, n);
            let rc = ngram_counts(&r, n);
            for (gram, c) in pc {
                matches[n - 1] += c.min(rc.get(gram).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let logs: Vec<f64> = (0..4)
        .filter(|&i| totals[i] > 0)
        .map(|i| {
            let m = if matches[i] == 0 { BLEU_EPSILON } else { matches[i] as f64 };
            (m / totals[i] as f64).ln()
        })
        .collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok((bp * mean.exp()).clamp(0.0, 1.0))
}

/// Case-insensitive, whitespace-normalized containment of `phrase` in
/// `text` with word boundaries on both ends.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    let text = normalize_ws(text).to_lowercase();
    let phrase = normalize_ws(phrase).to_lowercase();
    if phrase.is_empty() {
        return false;
    }
    text.match_indices(&phrase).any(|(start, m)| {
        let end = start + m.len();
        let before = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
        before && after
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InformSuccess {
    pub inform: f64,
    pub success: f64,
    /// (informed, succeeded) per dialogue.
    pub per_dialogue: Vec<(bool, bool)>,
}

/// Dialogue-level Inform and Success rates.
///
/// A goal is a table query: its constraints (WHERE, GROUP BY, HAVING)
/// select the acceptable rows and its select list names the requested
/// attributes (`*` requests nothing beyond the venue). A dialogue informs
/// when some acceptable row has its `name_attribute` value in the SYS
/// turns; it succeeds when, for one such row, every requested value also
/// appears there.
pub fn inform_success(
    dialogues: &[Dialogue],
    goals: &BTreeMap<String, String>,
    kb: &TableKb,
    name_attribute: &str,
) -> Result<InformSuccess, ScoreError> {
    if dialogues.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    let name_idx = kb
        .attribute_index(name_attribute)
        .ok_or_else(|| ScoreError::UnknownNameAttribute(name_attribute.to_string()))?;
    let mut per_dialogue = Vec::with_capacity(dialogues.len());
    for d in dialogues {
        let goal = goals.get(&d.id).ok_or_else(|| ScoreError::MissingGoal(d.id.clone()))?;
        let goal_err = |source| ScoreError::Goal {
            id: d.id.clone(),
            source,
        };
        let q = tquery::parse(goal).map_err(goal_err)?;
        let results = tquery::execute(&q, kb).map_err(goal_err)?;
        let requested: Vec<usize> = match &q.select {
            Selection::All => Vec::new(),
            Selection::Attributes(attrs) => attrs
                .iter()
                .map(|a| kb.attribute_index(a).expect("validated by execute"))
                .collect(),
        };
        let said: String = d.system_responses().collect::<Vec<_>>().join(" \n ");
        let mut informed = false;
        let mut succeeded = false;
        for &r in &results.row_indices {
            let row = &kb.rows()[r];
            if !contains_phrase(&said, &row[name_idx]) {
                continue;
            }
            informed = true;
            if requested.iter().all(|&i| contains_phrase(&said, &row[i])) {
                succeeded = true;
                break;
            }
        }
        per_dialogue.push((informed, succeeded));
    }
    let n = per_dialogue.len();
    Ok(InformSuccess {
        inform: ratio(per_dialogue.iter().filter(|p| p.0).count(), n),
        success: ratio(per_dialogue.iter().filter(|p| p.1).count(), n),
        per_dialogue,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GraphPrecision {
    pub precision: f64,
    pub oov_precision: f64,
    pub correct: usize,
    pub predicted: usize,
    pub oov_correct: usize,
    pub oov_predicted: usize,
}

/// Precision of predicted entities against the forward 2-hop neighborhood
/// (plus the entity itself) of the entities in the aligned user turn.
/// The OOV figures count only predicted entities outside `train_entities`.
pub fn graph_precision_2hop<P: AsRef<str>, U: AsRef<str>>(
    pred: &[P],
    user_turns: &[U],
    graph: &GraphKb,
    lexicon: &EntityLexicon,
    train_entities: &BTreeSet<String>,
) -> Result<GraphPrecision, ScoreError> {
    check_len("user turns", pred.len(), user_turns.len())?;
    let mut out = GraphPrecision::default();
    for (p, u) in pred.iter().zip(user_turns) {
        let mut gold = BTreeSet::new();
        for n in entity_set(lexicon, u.as_ref()) {
            if let Some(id) = graph.node_id(&n) {
                gold.insert(id);
                gold.extend(graph.reachable(id, None, 2, Direction::Forward));
            }
        }
        for e in entity_set(lexicon, p.as_ref()) {
            let ok = graph.node_id(&e).is_some_and(|id| gold.contains(&id));
            out.predicted += 1;
            out.correct += usize::from(ok);
            if !train_entities.contains(&e) {
                out.oov_predicted += 1;
                out.oov_correct += usize::from(ok);
            }
        }
    }
    out.precision = ratio(out.correct, out.predicted);
    out.oov_precision = ratio(out.oov_correct, out.oov_predicted);
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BabiAccuracy {
    pub response_accuracy: f64,
    pub dialogue_accuracy: f64,
    pub responses: usize,
    pub dialogues: usize,
}

impl fmt::Display for BabiAccuracy {
    /// Percentages as "response (dialogue)", e.g. "99.99 (99.90)".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2} ({:.2})",
            self.response_accuracy * 100.0,
            self.dialogue_accuracy * 100.0
        )
    }
}

/// Exact-match response accuracy and per-dialogue accuracy. Each inner
/// vector holds one dialogue's responses.
pub fn babi_accuracy<P: AsRef<str>, G: AsRef<str>>(
    pred: &[Vec<P>],
    gold: &[Vec<G>],
) -> Result<BabiAccuracy, ScoreError> {
    check_len("dialogues", pred.len(), gold.len())?;
    let (mut right, mut total, mut perfect) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        check_len("responses in a dialogue", p.len(), g.len())?;
        let hits = p
            .iter()
            .zip(g)
            .filter(|(a, b)| normalize_ws(a.as_ref()) == normalize_ws(b.as_ref()))
            .count();
        right += hits;
        total += g.len();
        perfect += usize::from(hits == g.len());
    }
    if total == 0 {
        return Err(ScoreError::EmptyCorpus);
    }
    Ok(BabiAccuracy {
        response_accuracy: ratio(right, total),
        dialogue_accuracy: ratio(perfect, gold.len()),
        responses: total,
        dialogues: gold.len(),
    })
}

/// Every system-side turn (API calls included): the targets of
/// response/dialogue accuracy.
pub fn system_side_turns(d: &Dialogue) -> Vec<&str> {
    d.turns()
        .iter()
        .filter(|t| t.speaker.is_system())
        .map(|t| t.text())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    F1,
    Bleu,
    Inform,
    Graph2Hop,
    Babi,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::F1, Metric::Bleu, Metric::Inform, Metric::Graph2Hop, Metric::Babi];

    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Bleu => "bleu",
            Metric::Inform => "inform",
            Metric::Graph2Hop => "graph2hop",
            Metric::Babi => "babi",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ScoreError::UnknownMetric(s.to_string()))
    }
}

/// Only the requested metrics are present.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entity_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inform: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dialogue_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_oov_precision: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_domain: BTreeMap<String, ScoreReport>,
}

/// Optional inputs some metrics need.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScoreContext<'a> {
    /// Entity lexicon for F1 and 2-hop precision.
    pub lexicon: Option<&'a EntityLexicon>,
    pub kb: Option<&'a TableKb>,
    /// Goal query per dialogue id.
    pub goals: Option<&'a BTreeMap<String, String>>,
    pub graph: Option<&'a GraphKb>,
    pub train_entities: Option<&'a BTreeSet<String>>,
    pub name_attribute: Option<&'a str>,
    /// Domain per dialogue id; dialogues without one are left out of the
    /// breakdown.
    pub domains: Option<&'a BTreeMap<String, String>>,
}

fn sys_responses(ds: &[Dialogue]) -> Vec<&str> {
    ds.iter().flat_map(Dialogue::system_responses).collect()
}

fn score_aligned(
    pred: &[Dialogue],
    gold: &[Dialogue],
    metrics: &BTreeSet<Metric>,
    ctx: &ScoreContext<'_>,
) -> Result<ScoreReport, ScoreError> {
    let mut report = ScoreReport::default();
    let p_sys = sys_responses(pred);
    let g_sys = sys_responses(gold);
    for &metric in metrics {
        let missing = |needs| ScoreError::MissingInput { metric, needs };
        match metric {
            Metric::Bleu => report.bleu = Some(bleu(&p_sys, &g_sys)?),
            Metric::F1 => {
                let lexicon = ctx.lexicon.ok_or(missing("an entity lexicon (KB or graph)"))?;
                let f = entity_f1(&p_sys, &g_sys, lexicon)?;
                report.entity_f1 = Some(f.f1);
                report.precision = Some(f.precision);
                report.recall = Some(f.recall);
            }
            Metric::Inform => {
                let kb = ctx.kb.ok_or(missing("a table KB"))?;
                let goals = ctx.goals.ok_or(missing("goals"))?;
                let s = inform_success(pred, goals, kb, ctx.name_attribute.unwrap_or("name"))?;
                report.inform = Some(s.inform);
                report.success = Some(s.success);
            }
            Metric::Graph2Hop => {
                let graph = ctx.graph.ok_or(missing("a graph KB"))?;
                let lexicon = ctx.lexicon.ok_or(missing("an entity lexicon"))?;
                let users: Vec<&str> = gold.iter().flat_map(|d| d.user_turn_before_each_response()).collect();
                let empty = BTreeSet::new();
                let train = ctx.train_entities.unwrap_or(&empty);
                let g = graph_precision_2hop(&p_sys, &users, graph, lexicon, train)?;
                report.graph_precision = Some(g.precision);
                if ctx.train_entities.is_some() {
                    report.graph_oov_precision = Some(g.oov_precision);
                }
            }
            Metric::Babi => {
                let p: Vec<Vec<&str>> = pred.iter().map(system_side_turns).collect();
                let g: Vec<Vec<&str>> = gold.iter().map(system_side_turns).collect();
                let b = babi_accuracy(&p, &g)?;
                report.response_accuracy = Some(b.response_accuracy);
                report.dialogue_accuracy = Some(b.dialogue_accuracy);
            }
        }
    }
    Ok(report)
}

/// Scores predicted dialogues against gold dialogues, aligned by position
/// and required to share ids. Predicted dialogues carry the gold user turns
/// with generated system turns.
pub fn score_dialogues(
    pred: &[Dialogue],
    gold: &[Dialogue],
    metrics: &BTreeSet<Metric>,
    ctx: &ScoreContext<'_>,
) -> Result<ScoreReport, ScoreError> {
    check_len("dialogues", pred.len(), gold.len())?;
    if gold.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    for (index, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.id != g.id {
            return Err(ScoreError::Misaligned {
                index,
                pred: p.id.clone(),
                gold: g.id.clone(),
            });
        }
    }
    let mut report = score_aligned(pred, gold, metrics, ctx)?;
    if let Some(domains) = ctx.domains {
        let mut split: BTreeMap<&str, (Vec<Dialogue>, Vec<Dialogue>)> = BTreeMap::new();
        for (p, g) in pred.iter().zip(gold) {
            if let Some(dom) = domains.get(&g.id) {
                let e = split.entry(dom).or_default();
                e.0.push(p.clone());
                e.1.push(g.clone());
            }
        }
        for (dom, (p, g)) in split {
            report
                .per_domain
                .insert(dom.to_string(), score_aligned(&p, &g, metrics, ctx)?);
        }
    }
    Ok(report)
}

/// Entities mentioned anywhere in a corpus (canonical forms).
pub fn corpus_entities(dialogues: &[Dialogue], lexicon: &EntityLexicon) -> BTreeSet<String> {
    dialogues
        .iter()
        .flat_map(|d| d.turns().iter().filter(|t| t.speaker != Speaker::Api))
        .flat_map(|t| entity_set(lexicon, t.text()))
        .collect()
}

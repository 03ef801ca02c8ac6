//! Knowledge-grounded delexicalization and relexicalization.
//!
//! Delexicalization replaces KB entity mentions in a dialogue with
//! placeholders `[attr_g]`, where `attr` names a table attribute (or a graph
//! slot such as `n3`) and `g` identifies one KB instance within the
//! dialogue. Relexicalization fills the placeholders from new query results.

mod delex;
mod relex;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gquery::{self, GraphQuery, GraphQueryError, SlotBinding};
use crate::kb::{EntityLexicon, EntityMatch, KbError, TableKb, Turn};
use crate::tquery::{self, QueryError, TableQuery};

pub use delex::{delex_graph, delex_table};
pub use relex::{relex, relex_with_binding};

#[derive(Debug, thiserror::Error)]
pub enum KeError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    GraphQuery(#[from] GraphQueryError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("`{surface}` matches several attributes: {}", candidates.join(", "))]
    AmbiguousEntity {
        surface: String,
        candidates: Vec<String>,
    },
    #[error("assignment has no value for [{attr}_{group}]")]
    IncompleteAssignment { group: u32, attr: String },
    #[error("invalid template `{id}`: {reason}")]
    InvalidTemplate { id: String, reason: String },
}

impl KeError {
    /// True for errors caused by bad input rather than a bug.
    pub fn is_validation(&self) -> bool {
        match self {
            KeError::Kb(e) => e.is_validation(),
            _ => true,
        }
    }
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([A-Za-z_][A-Za-z0-9_]*)_([0-9]+)\]").expect("valid regex"));

/// A `[attr_group]` token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placeholder {
    pub attr: String,
    pub group: u32,
}

impl Placeholder {
    pub fn new(attr: impl Into<String>, group: u32) -> Self {
        Placeholder {
            attr: attr.into(),
            group,
        }
    }

    /// The key used in binding maps: `attr_group`.
    pub fn key(&self) -> String {
        format!("{}_{}", self.attr, self.group)
    }

    fn from_key(key: &str) -> Option<Self> {
        let (attr, group) = key.rsplit_once('_')?;
        let valid_attr = attr
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && attr.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid_attr || group.is_empty() || !group.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some(Placeholder::new(attr, group.parse().ok()?))
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}_{}]", self.attr, self.group)
    }
}

/// Placeholders in `text` with their byte spans, left to right.
pub fn find_placeholders(text: &str) -> Vec<(std::ops::Range<usize>, Placeholder)> {
    PLACEHOLDER
        .captures_iter(text)
        .filter_map(|c| {
            let group = c[2].parse().ok()?;
            Some((c.get(0)?.range(), Placeholder::new(&c[1], group)))
        })
        .collect()
}

/// Placeholder attribute name for a table attribute: lowercase, with
/// characters other than ASCII letters and digits mapped to `_`.
pub fn attribute_key(attribute: &str) -> String {
    let mut key: String = attribute
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if !key.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        key.insert(0, '_');
    }
    key
}

/// Entity mentions in `text`; see [`EntityLexicon::match_entities`].
pub fn match_entities(text: &str, lexicon: &EntityLexicon) -> Vec<EntityMatch> {
    lexicon.match_entities(text)
}

/// Placeholder key → the surface it replaced in the source dialogue.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BindingMap(BTreeMap<String, String>);

impl BindingMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, placeholder: &Placeholder, surface: impl Into<String>) {
        self.0.insert(placeholder.key(), surface.into());
    }

    pub fn get(&self, placeholder: &Placeholder) -> Option<&str> {
        self.0.get(&placeholder.key()).map(String::as_str)
    }

    /// Reverse lookup: every placeholder whose surface equals `surface`.
    pub fn placeholders_for(&self, surface: &str) -> Vec<Placeholder> {
        self.0
            .iter()
            .filter(|(_, s)| s.as_str() == surface)
            .filter_map(|(k, _)| Placeholder::from_key(k))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Placeholder, &str)> {
        self.0
            .iter()
            .filter_map(|(k, v)| Some((Placeholder::from_key(k)?, v.as_str())))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The assignment that relexicalizes a template back to its source.
    pub fn as_assignment(&self) -> Assignment {
        let mut out = Assignment::new();
        for (p, surface) in self.iter() {
            out.entry(p.group)
                .or_default()
                .insert(p.attr, surface.to_string());
        }
        out
    }
}

/// Group → placeholder attribute → value.
pub type Assignment = BTreeMap<u32, BTreeMap<String, String>>;

/// Assigns whole KB rows to groups.
pub fn row_assignment(kb: &TableKb, rows: &BTreeMap<u32, usize>) -> Assignment {
    rows.iter()
        .filter_map(|(&g, &r)| {
            let row = kb.row(r)?;
            let values = kb
                .attributes()
                .iter()
                .zip(row)
                .map(|(a, v)| (attribute_key(a), v.clone()))
                .collect();
            Some((g, values))
        })
        .collect()
}

/// Graph templates use a single group 0 whose attributes are slot names.
pub fn slot_assignment(binding: &SlotBinding) -> Assignment {
    let values = binding
        .iter()
        .map(|(s, n)| (s.to_string(), n.clone()))
        .collect();
    Assignment::from([(0, values)])
}

/// A parsed user goal query of either dialect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GoalQuery {
    Table(TableQuery),
    Graph(GraphQuery),
}

impl GoalQuery {
    /// Dispatches on the leading keyword (`SELECT` or `MATCH`).
    pub fn parse(text: &str) -> Result<Self, KeError> {
        let head = text.split_whitespace().next().unwrap_or("");
        if head.eq_ignore_ascii_case("MATCH") {
            Ok(GoalQuery::Graph(gquery::parse(text)?))
        } else {
            Ok(GoalQuery::Table(tquery::parse(text)?))
        }
    }
}

/// A delexicalized dialogue with its goal query and binding map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub query: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub binding: BindingMap,
}

impl Template {
    pub fn placeholders(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.turns
            .iter()
            .flat_map(|t| find_placeholders(t.text()).into_iter().map(|(_, p)| p))
    }

    pub fn groups(&self) -> BTreeSet<u32> {
        self.placeholders().map(|p| p.group).collect()
    }

    /// Attributes used with each group.
    pub fn group_attrs(&self) -> BTreeMap<u32, BTreeSet<String>> {
        let mut out: BTreeMap<u32, BTreeSet<String>> = BTreeMap::new();
        for p in self.placeholders() {
            out.entry(p.group).or_default().insert(p.attr);
        }
        out
    }

    pub fn goal_query(&self) -> Result<GoalQuery, KeError> {
        GoalQuery::parse(&self.query)
    }

    fn invalid(&self, reason: String) -> KeError {
        KeError::InvalidTemplate {
            id: self.id.clone(),
            reason,
        }
    }

    /// Checks that every placeholder attribute belongs to the query's
    /// effective attributes (table) or slots (graph).
    pub fn validate(&self, table: Option<&TableKb>) -> Result<(), KeError> {
        let allowed: BTreeSet<String> = match self.goal_query()? {
            GoalQuery::Table(q) => match table {
                Some(kb) => {
                    q.validate(kb)?;
                    q.effective_attributes(kb)?
                        .iter()
                        .map(|a| attribute_key(a))
                        .collect()
                }
                None => return Ok(()),
            },
            GoalQuery::Graph(q) => q.slots().iter().map(|s| s.to_string()).collect(),
        };
        for p in self.placeholders() {
            if !allowed.contains(&p.attr) {
                return Err(self.invalid(format!("placeholder {p} is not in the query")));
            }
        }
        Ok(())
    }
}

/// Reads templates from a JSON array or from JSON lines.
pub fn read_templates(path: &Path) -> Result<Vec<Template>, KeError> {
    let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    parse_templates(&text).map_err(|(line, reason)| {
        KeError::Kb(KbError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        })
    })
}

fn parse_templates(text: &str) -> Result<Vec<Template>, (usize, String)> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| (e.line(), e.to_string()));
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_templates_from<R: BufRead>(mut reader: R) -> Result<Vec<Template>, KeError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| KbError::io("<input>", e))?;
    parse_templates(&text).map_err(|(line, reason)| {
        KeError::Kb(KbError::Parse {
            path: "<input>".into(),
            line,
            reason,
        })
    })
}

pub fn write_templates_jsonl<W: Write>(mut out: W, templates: &[Template]) -> std::io::Result<()> {
    for t in templates {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

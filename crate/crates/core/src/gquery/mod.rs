//! CYPHER-subset pattern queries over graph KBs.
//!
//! ```text
//! MATCH n1-[ActorsIn]->n2, n1-[ActorsIn]->n3 WHERE Z > 0 RETURN n1, n2, n3
//! ```
//!
//! Slots are named `n<digits>`. The optional `WHERE Z > 0` guard restricts
//! matches to nodes whose diminishing factor in a [`ZLedger`] is positive.

mod derive;
mod ledger;
mod matcher;
mod parse;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use derive::{derive_query_from_dialogue, DerivedQuery};
pub use ledger::ZLedger;
pub use matcher::match_pattern;
pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphQueryError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("pattern has no edges")]
    EmptyPattern,
    #[error("return slot {0} does not appear in the pattern")]
    ReturnSlotNotInPattern(Slot),
    #[error("slot {0} is returned twice")]
    DuplicateReturnSlot(Slot),
    #[error("pattern is not connected")]
    Disconnected,
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("node `{0}` is missing from the ledger")]
    MissingLedgerNode(String),
    #[error("found {found} matching graph entities, need at least 2")]
    NoQuery { found: usize },
}

/// A pattern variable `n<k>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot(pub u32);

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl std::str::FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('n')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .map(Slot)
            .ok_or_else(|| format!("`{s}` is not a slot name"))
    }
}

impl Serialize for Slot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Slot {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PatternEdge {
    pub head: Slot,
    pub relation: String,
    pub tail: Slot,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GraphQuery {
    pattern: Vec<PatternEdge>,
    return_slots: Vec<Slot>,
    z_guarded: bool,
}

/// Slot → node assignment for one match.
pub type SlotBinding = BTreeMap<Slot, String>;

impl GraphQuery {
    /// Validates that the pattern is non-empty and connected, and that every
    /// return slot occurs in it exactly once.
    pub fn new(
        pattern: Vec<PatternEdge>,
        return_slots: Vec<Slot>,
        z_guarded: bool,
    ) -> Result<Self, GraphQueryError> {
        if pattern.is_empty() {
            return Err(GraphQueryError::EmptyPattern);
        }
        let q = GraphQuery {
            pattern,
            return_slots,
            z_guarded,
        };
        let slots: BTreeSet<Slot> = q.slots().into_iter().collect();
        let mut seen = BTreeSet::new();
        for s in &q.return_slots {
            if !slots.contains(s) {
                return Err(GraphQueryError::ReturnSlotNotInPattern(*s));
            }
            if !seen.insert(*s) {
                return Err(GraphQueryError::DuplicateReturnSlot(*s));
            }
        }
        if q.component_sizes().len() != 1 {
            return Err(GraphQueryError::Disconnected);
        }
        Ok(q)
    }

    pub fn pattern(&self) -> &[PatternEdge] {
        &self.pattern
    }

    pub fn return_slots(&self) -> &[Slot] {
        &self.return_slots
    }

    pub fn z_guarded(&self) -> bool {
        self.z_guarded
    }

    pub fn with_z_guard(mut self, guarded: bool) -> Self {
        self.z_guarded = guarded;
        self
    }

    /// Slots in order of first appearance in the pattern.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        for e in &self.pattern {
            for s in [e.head, e.tail] {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }

    fn undirected(&self) -> BTreeMap<Slot, BTreeSet<Slot>> {
        let mut adj: BTreeMap<Slot, BTreeSet<Slot>> = BTreeMap::new();
        for e in &self.pattern {
            adj.entry(e.head).or_default().insert(e.tail);
            adj.entry(e.tail).or_default().insert(e.head);
        }
        adj
    }

    fn distances_from(adj: &BTreeMap<Slot, BTreeSet<Slot>>, start: Slot) -> BTreeMap<Slot, usize> {
        let mut dist = BTreeMap::from([(start, 0usize)]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &v in &adj[&u] {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn component_sizes(&self) -> Vec<usize> {
        let adj = self.undirected();
        let mut seen = BTreeSet::new();
        let mut sizes = Vec::new();
        for &s in adj.keys() {
            if seen.contains(&s) {
                continue;
            }
            let comp = Self::distances_from(&adj, s);
            sizes.push(comp.len());
            seen.extend(comp.into_keys());
        }
        sizes
    }

    /// The hop bound h: the longest shortest path between two slots.
    pub fn hop_bound(&self) -> usize {
        let adj = self.undirected();
        adj.keys()
            .map(|&s| Self::distances_from(&adj, s).into_values().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for GraphQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MATCH ")?;
        for (i, e) in self.pattern.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}-[{}]->{}", e.head, e.relation, e.tail)?;
        }
        if self.z_guarded {
            f.write_str(" WHERE Z > 0")?;
        }
        f.write_str(" RETURN ")?;
        for (i, s) in self.return_slots.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(h: u32, r: &str, t: u32) -> PatternEdge {
        PatternEdge {
            head: Slot(h),
            relation: r.into(),
            tail: Slot(t),
        }
    }

    #[test]
    fn validation() {
        assert_eq!(
            GraphQuery::new(vec![edge(1, "r", 2)], vec![Slot(3)], false),
            Err(GraphQueryError::ReturnSlotNotInPattern(Slot(3)))
        );
        assert_eq!(
            GraphQuery::new(vec![edge(1, "r", 2), edge(3, "r", 4)], vec![Slot(1)], false),
            Err(GraphQueryError::Disconnected)
        );
        assert_eq!(GraphQuery::new(vec![], vec![], false), Err(GraphQueryError::EmptyPattern));
    }

    #[test]
    fn hop_bound_and_slot_order() {
        let q = GraphQuery::new(
            vec![edge(1, "r", 2), edge(3, "r", 2), edge(3, "s", 4)],
            vec![Slot(1), Slot(4)],
            false,
        )
        .unwrap();
        assert_eq!(q.hop_bound(), 3);
        assert_eq!(q.slots(), vec![Slot(1), Slot(2), Slot(3), Slot(4)]);
        assert_eq!(q.to_string(), "MATCH n1-[r]->n2, n3-[r]->n2, n3-[s]->n4 RETURN n1, n4");
    }

    #[test]
    fn slot_names() {
        assert_eq!("n12".parse::<Slot>(), Ok(Slot(12)));
        assert!("n".parse::<Slot>().is_err());
        assert!("x1".parse::<Slot>().is_err());
        let b: SlotBinding = BTreeMap::from([(Slot(2), "b".to_string()), (Slot(10), "c".into())]);
        assert_eq!(serde_json::to_string(&b).unwrap(), r#"{"n2":"b","n10":"c"}"#);
    }
}

use std::collections::{BTreeMap, BTreeSet};

use crate::kb::GraphKb;

use super::{GraphQueryError, SlotBinding};

/// Per-node diminishing factors Z(n). Each use of a node in a generated
/// dialogue decrements its factor, never below zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZLedger {
    z: BTreeMap<String, u32>,
}

impl ZLedger {
    /// Initializes Z(n) to the degree of `n` (in plus out edges).
    pub fn from_graph(graph: &GraphKb) -> Self {
        let z = graph
            .nodes()
            .iter()
            .map(|name| {
                let id = graph.node_id(name).expect("node of graph");
                (name.clone(), graph.degree(id) as u32)
            })
            .collect();
        ZLedger { z }
    }

    pub fn get(&self, node: &str) -> Option<u32> {
        self.z.get(node).copied()
    }

    pub fn set(&mut self, node: &str, value: u32) {
        self.z.insert(node.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.z.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.z.values().map(|&v| v as u64).sum()
    }

    pub fn zero_count(&self) -> usize {
        self.z.values().filter(|&&v| v == 0).count()
    }

    /// Number of nodes per Z value.
    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for &v in self.z.values() {
            *h.entry(v).or_insert(0) += 1;
        }
        h
    }

    /// Decrements Z once for each distinct node in `binding`. Fails without
    /// changing anything if a bound node is not in the ledger.
    pub fn consume(&mut self, binding: &SlotBinding) -> Result<(), GraphQueryError> {
        let nodes: BTreeSet<&String> = binding.values().collect();
        if let Some(missing) = nodes.iter().find(|n| !self.z.contains_key(n.as_str())) {
            return Err(GraphQueryError::MissingLedgerNode((*missing).clone()));
        }
        for n in nodes {
            let v = self.z.get_mut(n.as_str()).expect("checked above");
            *v = v.saturating_sub(1);
        }
        Ok(())
    }
}

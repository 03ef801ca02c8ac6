use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use super::KbError;

/// Dense node index. Ids follow the lexicographic order of node names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// A labeled directed graph of `(head, relation, tail)` triples.
#[derive(Clone, Debug)]
pub struct GraphKb {
    nodes: Vec<String>,
    node_ids: HashMap<String, NodeId>,
    relations: Vec<String>,
    rel_ids: HashMap<String, RelId>,
    edges: Vec<(NodeId, RelId, NodeId)>,
    edge_set: HashSet<(NodeId, RelId, NodeId)>,
    out_adj: Vec<Vec<(RelId, NodeId)>>,
    in_adj: Vec<Vec<(RelId, NodeId)>>,
}

impl PartialEq for GraphKb {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.relations == other.relations && self.edges == other.edges
    }
}

impl Eq for GraphKb {}

impl GraphKb {
    /// Builds a graph from triples; duplicates collapse and the node set is
    /// the set of edge endpoints.
    pub fn from_triples<I, S>(triples: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        Self::with_nodes(Vec::<String>::new(), triples)
    }

    /// Like [`GraphKb::from_triples`], with additional (possibly isolated) nodes.
    pub fn with_nodes<N, I, S>(extra_nodes: N, triples: I) -> Self
    where
        N: IntoIterator,
        N::Item: Into<String>,
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let triples: Vec<(String, String, String)> = triples
            .into_iter()
            .map(|(h, r, t)| (h.into(), r.into(), t.into()))
            .collect();
        let mut node_names: BTreeSet<String> = extra_nodes.into_iter().map(Into::into).collect();
        let mut rel_names = BTreeSet::new();
        for (h, r, t) in &triples {
            node_names.insert(h.clone());
            node_names.insert(t.clone());
            rel_names.insert(r.clone());
        }
        let nodes: Vec<String> = node_names.into_iter().collect();
        let relations: Vec<String> = rel_names.into_iter().collect();
        let node_ids: HashMap<String, NodeId> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId(i as u32)))
            .collect();
        let rel_ids: HashMap<String, RelId> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), RelId(i as u32)))
            .collect();
        let mut edges: Vec<(NodeId, RelId, NodeId)> = triples
            .iter()
            .map(|(h, r, t)| (node_ids[h], rel_ids[r], node_ids[t]))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        for &(h, r, t) in &edges {
            out_adj[h.0 as usize].push((r, t));
            in_adj[t.0 as usize].push((r, h));
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        let edge_set = edges.iter().copied().collect();
        GraphKb {
            nodes,
            node_ids,
            relations,
            rel_ids,
            edges,
            edge_set,
            out_adj,
            in_adj,
        }
    }

    /// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
    pub fn from_tsv_str(text: &str) -> Result<Self, KbError> {
        let mut triples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 || parts.iter().any(|p| p.trim().is_empty()) {
                return Err(KbError::InvalidGraph(format!(
                    "line {}: expected head<TAB>relation<TAB>tail",
                    idx + 1
                )));
            }
            triples.push((parts[0].trim(), parts[1].trim(), parts[2].trim()));
        }
        Ok(Self::from_triples(triples))
    }

    pub fn load_tsv(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
        Self::from_tsv_str(&text).map_err(|e| match e {
            KbError::InvalidGraph(reason) => KbError::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })
    }

    /// Triples sorted by (head, relation, tail) name, LF-terminated.
    pub fn to_tsv_string(&self) -> String {
        let mut out = String::new();
        for (h, r, t) in self.triples() {
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_ids.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0 as usize]
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        self.rel_ids.get(name).copied()
    }

    pub fn relation_name(&self, id: RelId) -> &str {
        &self.relations[id.0 as usize]
    }

    pub fn edge_ids(&self) -> &[(NodeId, RelId, NodeId)] {
        &self.edges
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.edges
            .iter()
            .map(|&(h, r, t)| (self.node_name(h), self.relation_name(r), self.node_name(t)))
    }

    pub fn has_edge(&self, head: NodeId, rel: RelId, tail: NodeId) -> bool {
        self.edge_set.contains(&(head, rel, tail))
    }

    /// Outgoing `(relation, tail)` pairs sorted by relation then tail.
    pub fn out_edges(&self, node: NodeId) -> &[(RelId, NodeId)] {
        &self.out_adj[node.0 as usize]
    }

    /// Incoming `(relation, head)` pairs sorted by relation then head.
    pub fn in_edges(&self, node: NodeId) -> &[(RelId, NodeId)] {
        &self.in_adj[node.0 as usize]
    }

    /// Number of incident edges; a self-loop counts once per direction.
    pub fn degree(&self, node: NodeId) -> usize {
        self.out_adj[node.0 as usize].len() + self.in_adj[node.0 as usize].len()
    }

    /// Tails reachable from `node` by one `rel` edge, in id order.
    pub fn out_neighbors(&self, node: NodeId, rel: RelId) -> impl Iterator<Item = NodeId> + '_ {
        let list = self.out_edges(node);
        let start = list.partition_point(|&(r, _)| r < rel);
        list[start..].iter().take_while(move |&&(r, _)| r == rel).map(|&(_, n)| n)
    }

    /// Heads with a `rel` edge into `node`, in id order.
    pub fn in_neighbors(&self, node: NodeId, rel: RelId) -> impl Iterator<Item = NodeId> + '_ {
        let list = self.in_edges(node);
        let start = list.partition_point(|&(r, _)| r < rel);
        list[start..].iter().take_while(move |&&(r, _)| r == rel).map(|&(_, n)| n)
    }

    fn require_node(&self, name: &str) -> Result<NodeId, KbError> {
        self.node_id(name).ok_or_else(|| KbError::UnknownNode(name.to_string()))
    }

    fn require_relation(&self, name: &str) -> Result<RelId, KbError> {
        self.relation_id(name)
            .ok_or_else(|| KbError::UnknownRelation(name.to_string()))
    }

    /// N_r(n): the tails of forward `r` edges out of `n`.
    pub fn neighbors(&self, node: &str, relation: &str) -> Result<BTreeSet<&str>, KbError> {
        let n = self.require_node(node)?;
        let r = self.require_relation(relation)?;
        Ok(self.out_neighbors(n, r).map(|m| self.node_name(m)).collect())
    }

    /// N_Rh(n): nodes reachable from `n` in 1..=h forward hops over
    /// relations in `relations`. `n` itself is included only when a cycle
    /// leads back to it.
    pub fn neighbors_h(
        &self,
        node: &str,
        relations: &[&str],
        hops: usize,
    ) -> Result<BTreeSet<&str>, KbError> {
        let n = self.require_node(node)?;
        let rels = relations
            .iter()
            .map(|r| self.require_relation(r))
            .collect::<Result<HashSet<_>, _>>()?;
        Ok(self
            .reachable(n, Some(&rels), hops, Direction::Forward)
            .into_iter()
            .map(|id| self.node_name(id))
            .collect())
    }

    /// Nodes reachable in 1..=hops steps. `relations = None` admits every label.
    pub fn reachable(
        &self,
        start: NodeId,
        relations: Option<&HashSet<RelId>>,
        hops: usize,
        direction: Direction,
    ) -> BTreeSet<NodeId> {
        let admits = |r: &RelId| relations.is_none_or(|set| set.contains(r));
        let mut reached = BTreeSet::new();
        let mut frontier = vec![start];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                let forward = matches!(direction, Direction::Forward | Direction::Both);
                let backward = matches!(direction, Direction::Backward | Direction::Both);
                let outs = if forward { self.out_edges(u) } else { &[] };
                let ins = if backward { self.in_edges(u) } else { &[] };
                for &(r, v) in outs.iter().chain(ins) {
                    if admits(&r) && reached.insert(v) {
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        reached
    }
}

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::kb::{Dialogue, EntityLexicon, GraphKb, NodeId, RelId, Speaker};

use super::{GraphQuery, GraphQueryError, PatternEdge, Slot, SlotBinding};

type Edge = (NodeId, RelId, NodeId);

/// A query induced from a dialogue, with the binding that reproduces it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedQuery {
    pub query: GraphQuery,
    pub binding: SlotBinding,
    /// Graph entities found in the dialogue, in order of first mention.
    pub mentions: Vec<String>,
    /// Set when some mentioned entities were unreachable from the rest and
    /// were left out of the pattern.
    pub partial: bool,
}

/// Shortest path from `a` to `b` ignoring edge direction. Edges keep their
/// true orientation. Ties are broken by adjacency order (outgoing edges
/// first, each sorted by relation then node id).
fn shortest_path(g: &GraphKb, a: NodeId, b: NodeId) -> Option<Vec<Edge>> {
    let mut parent: HashMap<NodeId, (NodeId, Edge)> = HashMap::new();
    let mut seen = HashSet::from([a]);
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        if u == b {
            break;
        }
        let outs = g.out_edges(u).iter().map(|&(r, v)| (v, (u, r, v)));
        let ins = g.in_edges(u).iter().map(|&(r, v)| (v, (v, r, u)));
        for (v, edge) in outs.chain(ins) {
            if seen.insert(v) {
                parent.insert(v, (u, edge));
                queue.push_back(v);
            }
        }
    }
    if !seen.contains(&b) {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = b;
    while cur != a {
        let (prev, edge) = parent[&cur];
        path.push(edge);
        cur = prev;
    }
    path.reverse();
    Some(path)
}

fn find(parent: &mut [usize], i: usize) -> usize {
    if parent[i] != i {
        let root = find(parent, parent[i]);
        parent[i] = root;
    }
    parent[i]
}

/// Induces a graph query from the entities mentioned in a dialogue.
///
/// Entities are string-matched turn by turn (API turns excluded). Shortest
/// paths between every pair of mentioned entities are unioned; nodes on
/// those paths that were not mentioned become extra slots. Mentioned
/// entities get slots `n1..` in order of first mention, intermediates
/// follow. All slots are returned.
pub fn derive_query_from_dialogue(
    dialogue: &Dialogue,
    graph: &GraphKb,
    lexicon: &EntityLexicon,
) -> Result<DerivedQuery, GraphQueryError> {
    let mut mentioned: Vec<NodeId> = Vec::new();
    for turn in dialogue.turns() {
        if turn.speaker == Speaker::Api {
            continue;
        }
        for m in lexicon.match_entities(turn.text()) {
            if let Some(id) = graph.node_id(&m.canonical) {
                if !mentioned.contains(&id) {
                    mentioned.push(id);
                }
            }
        }
    }
    if mentioned.len() < 2 {
        return Err(GraphQueryError::NoQuery {
            found: mentioned.len(),
        });
    }

    let k = mentioned.len();
    let mut uf: Vec<usize> = (0..k).collect();
    let mut paths: Vec<((usize, usize), Vec<Edge>)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if let Some(p) = shortest_path(graph, mentioned[i], mentioned[j]) {
                let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
                uf[ri.max(rj)] = ri.min(rj);
                paths.push(((i, j), p));
            }
        }
    }
    // Largest component; ties go to the one holding the earliest mention.
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..k {
        *sizes.entry(find(&mut uf, i)).or_insert(0) += 1;
    }
    let (&root, &size) = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("at least one mention");
    if size < 2 {
        return Err(GraphQueryError::NoQuery { found: 1 });
    }
    let partial = size < k;
    let members: Vec<usize> = (0..k).filter(|&i| find(&mut uf, i) == root).collect();

    let mut slot_of: HashMap<NodeId, Slot> = HashMap::new();
    let mut next = 1u32;
    for &i in &members {
        slot_of.insert(mentioned[i], Slot(next));
        next += 1;
    }
    let mut edges: Vec<Edge> = Vec::new();
    for ((i, _), path) in &paths {
        if find(&mut uf, *i) != root {
            continue;
        }
        for &(h, r, t) in path {
            for n in [h, t] {
                slot_of.entry(n).or_insert_with(|| {
                    next += 1;
                    Slot(next - 1)
                });
            }
            if !edges.contains(&(h, r, t)) {
                edges.push((h, r, t));
            }
        }
    }

    // Emit edges breadth-first from n1 so every edge touches an earlier slot.
    let start = mentioned[members[0]];
    let mut emitted = vec![false; edges.len()];
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut pattern = Vec::with_capacity(edges.len());
    while let Some(u) = queue.pop_front() {
        let mut incident: Vec<(Slot, &str, Slot, usize)> = edges
            .iter()
            .enumerate()
            .filter(|&(e, &(h, _, t))| !emitted[e] && (h == u || t == u))
            .map(|(e, &(h, r, t))| {
                let other = if h == u { t } else { h };
                (slot_of[&other], graph.relation_name(r), slot_of[&h], e)
            })
            .collect();
        incident.sort();
        for (_, _, _, e) in incident {
            emitted[e] = true;
            let (h, r, t) = edges[e];
            pattern.push(PatternEdge {
                head: slot_of[&h],
                relation: graph.relation_name(r).to_string(),
                tail: slot_of[&t],
            });
            for n in [h, t] {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
    }

    let binding: SlotBinding = slot_of
        .iter()
        .map(|(&n, &s)| (s, graph.node_name(n).to_string()))
        .collect();
    let return_slots = binding.keys().copied().collect();
    let query = GraphQuery::new(pattern, return_slots, false)?;
    Ok(DerivedQuery {
        query,
        binding,
        mentions: mentioned
            .iter()
            .map(|&n| graph.node_name(n).to_string())
            .collect(),
        partial,
    })
}

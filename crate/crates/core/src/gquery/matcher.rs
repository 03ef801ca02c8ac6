use crate::kb::{GraphKb, NodeId, RelId};

use super::{GraphQuery, GraphQueryError, SlotBinding, ZLedger};

/// An edge between the slot being assigned and an earlier slot (or itself).
#[derive(Clone, Copy)]
enum Link {
    /// earlier -[rel]-> current
    From(usize, RelId),
    /// current -[rel]-> earlier
    To(usize, RelId),
    SelfLoop(RelId),
}

/// Enumerates injective bindings of the pattern's slots to graph nodes.
///
/// Slots are assigned in order of first appearance and candidates are tried
/// in node-id (lexicographic name) order, so results are deterministic.
/// When the query is Z-guarded, every bound node must have a positive entry
/// in `ledger`; nodes missing from the ledger count as zero. Without a
/// ledger the guard is ignored.
pub fn match_pattern(
    query: &GraphQuery,
    graph: &GraphKb,
    ledger: Option<&ZLedger>,
    limit: Option<usize>,
) -> Result<Vec<SlotBinding>, GraphQueryError> {
    let order = query.slots();
    let pos = |s| order.iter().position(|&o| o == s).expect("slot in pattern");
    let mut links: Vec<Vec<Link>> = vec![Vec::new(); order.len()];
    let mut required: Vec<Vec<(RelId, bool)>> = vec![Vec::new(); order.len()];
    for e in query.pattern() {
        let rel = graph
            .relation_id(&e.relation)
            .ok_or_else(|| GraphQueryError::UnknownRelation(e.relation.clone()))?;
        let (h, t) = (pos(e.head), pos(e.tail));
        required[h].push((rel, true));
        required[t].push((rel, false));
        match h.cmp(&t) {
            std::cmp::Ordering::Less => links[t].push(Link::From(h, rel)),
            std::cmp::Ordering::Greater => links[h].push(Link::To(t, rel)),
            std::cmp::Ordering::Equal => links[h].push(Link::SelfLoop(rel)),
        }
    }

    let admissible: Option<Vec<bool>> = match (query.z_guarded(), ledger) {
        (true, Some(z)) => Some(
            graph
                .nodes()
                .iter()
                .map(|n| z.get(n).unwrap_or(0) > 0)
                .collect(),
        ),
        _ => None,
    };

    let mut search = Search {
        graph,
        links,
        required,
        admissible,
        limit: limit.unwrap_or(usize::MAX),
        assigned: Vec::with_capacity(order.len()),
        used: vec![false; graph.node_count()],
        found: Vec::new(),
    };
    if search.limit > 0 {
        search.extend();
    }
    Ok(search
        .found
        .into_iter()
        .map(|ids| {
            order
                .iter()
                .zip(ids)
                .map(|(&s, id)| (s, graph.node_name(id).to_string()))
                .collect()
        })
        .collect())
}

struct Search<'g> {
    graph: &'g GraphKb,
    links: Vec<Vec<Link>>,
    required: Vec<Vec<(RelId, bool)>>,
    admissible: Option<Vec<bool>>,
    limit: usize,
    assigned: Vec<NodeId>,
    used: Vec<bool>,
    found: Vec<Vec<NodeId>>,
}

impl Search<'_> {
    fn consistent(&self, k: usize, n: NodeId) -> bool {
        if self.used[n.0 as usize] {
            return false;
        }
        if let Some(adm) = &self.admissible {
            if !adm[n.0 as usize] {
                return false;
            }
        }
        let g = self.graph;
        self.links[k].iter().all(|&link| match link {
            Link::From(j, r) => g.has_edge(self.assigned[j], r, n),
            Link::To(j, r) => g.has_edge(n, r, self.assigned[j]),
            Link::SelfLoop(r) => g.has_edge(n, r, n),
        }) && self.required[k].iter().all(|&(r, out)| {
            if out {
                g.out_neighbors(n, r).next().is_some()
            } else {
                g.in_neighbors(n, r).next().is_some()
            }
        })
    }

    fn candidates(&self, k: usize) -> Vec<NodeId> {
        let g = self.graph;
        let anchor = self.links[k].iter().find_map(|&link| match link {
            Link::From(j, r) => Some(g.out_neighbors(self.assigned[j], r).collect()),
            Link::To(j, r) => Some(g.in_neighbors(self.assigned[j], r).collect()),
            Link::SelfLoop(_) => None,
        });
        anchor.unwrap_or_else(|| (0..g.node_count() as u32).map(NodeId).collect())
    }

    /// Returns false once the limit is reached.
    fn extend(&mut self) -> bool {
        let k = self.assigned.len();
        if k == self.links.len() {
            self.found.push(self.assigned.clone());
            return self.found.len() < self.limit;
        }
        for n in self.candidates(k) {
            if !self.consistent(k, n) {
                continue;
            }
            self.assigned.push(n);
            self.used[n.0 as usize] = true;
            let go_on = self.extend();
            self.used[n.0 as usize] = false;
            self.assigned.pop();
            if !go_on {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gquery::{parse, Slot};

    fn movies() -> GraphKb {
        GraphKb::from_triples([
            ("Christian Bale", "ActorsIn", "The Dark Knight"),
            ("Christian Bale", "ActorsIn", "The Prestige"),
            ("Michael Caine", "ActorsIn", "The Dark Knight"),
            ("Michael Caine", "ActorsIn", "The Prestige"),
            ("The Dark Knight", "DirectedBy", "Christopher Nolan"),
            ("The Prestige", "DirectedBy", "Christopher Nolan"),
        ])
    }

    #[test]
    fn enumerates_injective_bindings_in_order() {
        let g = movies();
        let q = parse("MATCH n1-[ActorsIn]->n2, n1-[ActorsIn]->n3 RETURN n1, n2, n3").unwrap();
        let all = match_pattern(&q, &g, None, None).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0][&Slot(1)], "Christian Bale");
        assert_eq!(all[0][&Slot(2)], "The Dark Knight");
        assert_eq!(all[0][&Slot(3)], "The Prestige");
        assert!(all.iter().all(|b| b[&Slot(2)] != b[&Slot(3)]));
        assert_eq!(match_pattern(&q, &g, None, Some(1)).unwrap().len(), 1);
        assert!(match_pattern(&q, &g, None, Some(0)).unwrap().is_empty());
    }

    #[test]
    fn z_guard_filters_exhausted_nodes() {
        let g = movies();
        let q = parse("MATCH n1-[ActorsIn]->n2 WHERE Z > 0 RETURN n1").unwrap();
        let mut z = ZLedger::from_graph(&g);
        z.set("Christian Bale", 0);
        let found = match_pattern(&q, &g, Some(&z), None).unwrap();
        assert!(found.iter().all(|b| b[&Slot(1)] == "Michael Caine"));
        assert_eq!(found.len(), 2);
        let unguarded = q.clone().with_z_guard(false);
        assert_eq!(match_pattern(&unguarded, &g, Some(&z), None).unwrap().len(), 4);
    }

    #[test]
    fn unknown_relation() {
        let q = parse("MATCH n1-[Wrote]->n2 RETURN n1").unwrap();
        assert_eq!(
            match_pattern(&q, &movies(), None, None),
            Err(GraphQueryError::UnknownRelation("Wrote".into()))
        );
    }
}

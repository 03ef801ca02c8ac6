use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::Write;

use crate::gquery::{match_pattern, GraphQuery, ZLedger};
use crate::ke::{relex, slot_assignment, GoalQuery, Template};
use crate::kb::{GraphKb, KbError, NodeId, RelId};

use super::{GenError, GenerationConfig, GeneratedCorpus, GeneratedDialogue, GroupSource, Provenance, SplitMix64, TemplateStats};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationStats {
    /// 0 is the initial state; generation iterations count from 1.
    pub iteration: usize,
    pub generated: usize,
    /// Sampled templates with no admissible binding.
    pub skipped: usize,
    pub total_z: u64,
    pub zero_count: usize,
    pub histogram: BTreeMap<u32, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZHistory {
    pub iterations: Vec<IterationStats>,
}

impl ZHistory {
    /// CSV with header `iteration,z_value,node_count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,z_value,node_count")?;
        for it in &self.iterations {
            for (z, n) in &it.histogram {
                writeln!(out, "{},{},{}", it.iteration, z, n)?;
            }
        }
        Ok(())
    }
}

/// Iterative graph-mode generation, one iteration per [`GraphGenerator::step`].
pub struct GraphGenerator<'g> {
    graph: &'g GraphKb,
    templates: Vec<(Template, GraphQuery)>,
    ledger: ZLedger,
    rng: SplitMix64,
    per_iteration: usize,
    iteration: usize,
    history: ZHistory,
    corpus: GeneratedCorpus,
}

impl<'g> GraphGenerator<'g> {
    /// Templates whose query is not a valid graph query over `graph` are
    /// dropped with a warning.
    pub fn new(templates: &[Template], graph: &'g GraphKb, cfg: &GenerationConfig) -> Self {
        let mut usable = Vec::new();
        for t in templates {
            let q = match t.goal_query() {
                Ok(GoalQuery::Graph(q)) => q.with_z_guard(true),
                Ok(GoalQuery::Table(_)) => {
                    log::warn!("template {} has a table query; skipped in graph mode", t.id);
                    continue;
                }
                Err(e) => {
                    log::warn!("template {}: {e}; skipped", t.id);
                    continue;
                }
            };
            if let Some(r) = q.pattern().iter().find(|e| graph.relation_id(&e.relation).is_none()) {
                log::warn!("template {}: unknown relation `{}`; skipped", t.id, r.relation);
                continue;
            }
            usable.push((t.clone(), q));
        }
        let ledger = ZLedger::from_graph(graph);
        let mut generator = GraphGenerator {
            graph,
            corpus: GeneratedCorpus {
                dialogues: Vec::new(),
                stats: usable
                    .iter()
                    .map(|(t, _)| TemplateStats {
                        template: t.id.clone(),
                        ..Default::default()
                    })
                    .collect(),
            },
            templates: usable,
            ledger,
            rng: SplitMix64::new(cfg.seed),
            per_iteration: cfg.templates_per_iteration,
            iteration: 0,
            history: ZHistory::default(),
        };
        generator.record(0, 0);
        generator
    }

    fn record(&mut self, generated: usize, skipped: usize) {
        self.history.iterations.push(IterationStats {
            iteration: self.iteration,
            generated,
            skipped,
            total_z: self.ledger.total(),
            zero_count: self.ledger.zero_count(),
            histogram: self.ledger.histogram(),
        });
    }

    pub fn ledger(&self) -> &ZLedger {
        &self.ledger
    }

    /// Usable templates with their Z-guarded queries.
    pub fn templates(&self) -> &[(Template, GraphQuery)] {
        &self.templates
    }

    /// Samples templates uniformly with replacement; each takes its first
    /// admissible binding, is relexicalized, and consumes the binding.
    pub fn step(&mut self) -> &IterationStats {
        self.iteration += 1;
        let (mut generated, mut skipped) = (0, 0);
        if !self.templates.is_empty() {
            for draw in 0..self.per_iteration {
                let ti = self.rng.below(self.templates.len());
                let (t, q) = &self.templates[ti];
                let binding = match match_pattern(q, self.graph, Some(&self.ledger), Some(1)) {
                    Ok(mut found) if !found.is_empty() => found.swap_remove(0),
                    Ok(_) => {
                        skipped += 1;
                        self.corpus.stats[ti].skipped += 1;
                        continue;
                    }
                    Err(e) => {
                        log::warn!("template {}: {e}", t.id);
                        skipped += 1;
                        self.corpus.stats[ti].skipped += 1;
                        continue;
                    }
                };
                let id = format!("{}-{}-{}", t.id, self.iteration, draw);
                let dialogue = match relex(t, &slot_assignment(&binding), id) {
                    Ok(d) => d,
                    Err(e) => {
                        log::warn!("template {}: {e}", t.id);
                        skipped += 1;
                        self.corpus.stats[ti].skipped += 1;
                        continue;
                    }
                };
                self.ledger
                    .consume(&binding)
                    .expect("matched nodes come from the ledger's graph");
                generated += 1;
                self.corpus.stats[ti].generated += 1;
                self.corpus.dialogues.push(GeneratedDialogue {
                    dialogue,
                    provenance: Provenance {
                        template: t.id.clone(),
                        result_index: draw,
                        assignment: BTreeMap::from([(0, GroupSource::Nodes(binding))]),
                        sample: None,
                        iteration: Some(self.iteration),
                    },
                });
            }
        }
        self.record(generated, skipped);
        self.history.iterations.last().expect("just recorded")
    }

    pub fn finish(self) -> (GeneratedCorpus, ZHistory, ZLedger) {
        (self.corpus, self.history, self.ledger)
    }
}

/// Runs `cfg.iterations` iterations of graph-mode generation.
pub fn generate_graph_iterative(
    templates: &[Template],
    graph: &GraphKb,
    cfg: &GenerationConfig,
) -> Result<(GeneratedCorpus, ZHistory, ZLedger), GenError> {
    let mut generator = GraphGenerator::new(templates, graph, cfg);
    for _ in 0..cfg.iterations {
        generator.step();
    }
    Ok(generator.finish())
}

/// The `hop`-neighborhood of `seeds`, following edges in both directions.
///
/// Edges incident to nodes closer than `hop` are collected in BFS order
/// (outgoing before incoming, each sorted) until `max_edges` is reached.
/// Seeds are always kept, even if isolated.
pub fn select_subgraph(graph: &GraphKb, seeds: &[&str], hop: usize, max_edges: usize) -> Result<GraphKb, KbError> {
    let seed_ids = seeds
        .iter()
        .map(|s| graph.node_id(s).ok_or_else(|| KbError::UnknownNode(s.to_string())))
        .collect::<Result<Vec<NodeId>, _>>()?;
    let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in &seed_ids {
        if depth.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    let mut edges: Vec<(NodeId, RelId, NodeId)> = Vec::new();
    let mut taken: HashSet<(NodeId, RelId, NodeId)> = HashSet::new();
    'bfs: while let Some(u) = queue.pop_front() {
        let d = depth[&u];
        if d >= hop {
            continue;
        }
        let outs = graph.out_edges(u).iter().map(|&(r, v)| ((u, r, v), v));
        let ins = graph.in_edges(u).iter().map(|&(r, v)| ((v, r, u), v));
        for (edge, v) in outs.chain(ins) {
            if edges.len() >= max_edges {
                break 'bfs;
            }
            if taken.insert(edge) {
                edges.push(edge);
            }
            if let std::collections::btree_map::Entry::Vacant(e) = depth.entry(v) {
                e.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    let nodes: BTreeSet<&str> = seed_ids.iter().map(|&n| graph.node_name(n)).collect();
    let triples: Vec<(&str, &str, &str)> = edges
        .iter()
        .map(|&(h, r, t)| (graph.node_name(h), graph.relation_name(r), graph.node_name(t)))
        .collect();
    Ok(GraphKb::with_nodes(nodes, triples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ke::{BindingMap, Placeholder};
    use crate::kb::{Speaker, Turn};

    fn chain() -> GraphKb {
        GraphKb::from_triples([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d"), ("x", "s", "a")])
    }

    #[test]
    fn subgraph_star_and_saturation() {
        let g = chain();
        let star = select_subgraph(&g, &["a"], 1, usize::MAX).unwrap();
        let triples: Vec<_> = star.triples().collect();
        assert_eq!(triples, vec![("a", "r", "b"), ("x", "s", "a")]);
        let all = select_subgraph(&g, &["a", "b", "c", "d", "x"], 5, usize::MAX).unwrap();
        assert_eq!(all, g);
        let capped = select_subgraph(&g, &["a"], 3, 2).unwrap();
        assert_eq!(capped.edge_count(), 2);
        assert!(matches!(select_subgraph(&g, &["zz"], 1, 1), Err(KbError::UnknownNode(_))));
    }

    #[test]
    fn one_iteration_one_template() {
        let g = chain();
        let mut binding = BindingMap::new();
        binding.insert(&Placeholder::new("n1", 0), "a");
        binding.insert(&Placeholder::new("n2", 0), "b");
        let t = Template {
            id: "t".into(),
            query: "MATCH n1-[r]->n2 RETURN n1, n2".into(),
            turns: vec![
                Turn::new(Speaker::Usr, "tell me about [n1_0]").unwrap(),
                Turn::new(Speaker::Sys, "it links to [n2_0]").unwrap(),
            ],
            binding,
        };
        let cfg = GenerationConfig {
            templates_per_iteration: 1,
            iterations: 1,
            ..Default::default()
        };
        let before = ZLedger::from_graph(&g).total();
        let (corpus, history, ledger) = generate_graph_iterative(&[t], &g, &cfg).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.dialogues[0].dialogue.turns()[1].text(), "it links to b");
        assert_eq!(ledger.total(), before - 2);
        assert_eq!(history.iterations.len(), 2);
        let mut csv = Vec::new();
        history.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("iteration,z_value,node_count\n0,1,"));
    }
}

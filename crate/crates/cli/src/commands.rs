use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kedial::camrest;
use kedial::genpipe::{
    generate_graph_iterative, generate_per_kb, generate_table, synth_corpus, synth_graph_corpus, GeneratedCorpus,
    GenerationConfig, GenerationMode, SyntheticSpec,
};
use kedial::gquery::{self, match_pattern};
use kedial::kb::{write_dialogues_jsonl, Boundary, Dialogue, EntityLexicon, TableKb};
use kedial::ke::{delex_graph, delex_table, read_templates, write_templates_jsonl, KeError, Template};
use kedial::memlm::MemLm;
use kedial::score::{corpus_entities, score_dialogues, Metric, ScoreContext};
use kedial::tquery;
use serde_json::json;

use crate::io::{
    invalid, load_graph, load_kb, load_table, print_json, read_dialogues, read_string_map, require_dir, require_file,
    sibling, write_json, write_with, Kb,
};
use crate::{DelexArgs, EvalArgs, GenerateArgs, Mode, QueryArgs, ScoreArgs, SynthArgs, TrainArgs};

#[derive(Default)]
struct DelexSummary {
    dialogues: usize,
    placeholders: usize,
    missing_query: usize,
    ambiguous: usize,
    no_entities: usize,
    failed: usize,
}

pub fn delex(a: &DelexArgs) -> Result<()> {
    let mut summary = DelexSummary::default();
    let mut templates: Vec<Template> = Vec::new();
    let skip = |id: &str, why: String| -> Result<()> {
        if a.strict {
            return Err(invalid(format!("{id}: {why}")));
        }
        log::warn!("{id}: {why}; skipped");
        Ok(())
    };

    let (dialogues, kb, queries) = match &a.camrest {
        Some(dir) => {
            require_dir(dir)?;
            let db = dir.join("CamRestDB.json");
            let dial = dir.join("CamRest676.json");
            require_file(&db)?;
            require_file(&dial)?;
            let kb = camrest::load_kb(&db)?;
            let mut queries = BTreeMap::new();
            let dialogues: Vec<Dialogue> = camrest::load_dialogues(&dial)?
                .into_iter()
                .take(camrest::TRAIN_DIALOGUES)
                .map(|g| {
                    queries.insert(g.dialogue.id.clone(), g.query);
                    g.dialogue
                })
                .collect();
            (dialogues, Kb::Table(kb), Some(queries))
        }
        None => {
            let dialogues = read_dialogues(a.dialogues.as_deref().expect("required by clap"))?;
            let kb = load_kb(a.kb.as_deref().expect("required by clap"))?;
            let queries = a.queries.as_deref().map(read_string_map).transpose()?;
            (dialogues, kb, queries)
        }
    };
    summary.dialogues = dialogues.len();

    match &kb {
        Kb::Table(table) => {
            let queries = queries.ok_or_else(|| invalid("--queries is required for a table KB"))?;
            let lexicon = EntityLexicon::from_table(table, None, Boundary::WordStart);
            for d in &dialogues {
                let Some(q) = queries.get(&d.id) else {
                    summary.missing_query += 1;
                    skip(&d.id, "no goal query".into())?;
                    continue;
                };
                match delex_table(d, q, table, &lexicon) {
                    Ok(t) if t.placeholders().next().is_none() => {
                        summary.no_entities += 1;
                        skip(&d.id, "no query entity mentioned".into())?;
                    }
                    Ok(t) => templates.push(t),
                    Err(e @ KeError::AmbiguousEntity { .. }) => {
                        summary.ambiguous += 1;
                        skip(&d.id, e.to_string())?;
                    }
                    Err(e) if e.is_validation() => {
                        summary.failed += 1;
                        skip(&d.id, e.to_string())?;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Kb::Graph(graph) => {
            let lexicon = EntityLexicon::from_graph(graph, a.min_len);
            for d in &dialogues {
                match delex_graph(d, graph, &lexicon) {
                    Ok(t) => templates.push(t),
                    Err(e) if e.is_validation() => {
                        summary.failed += 1;
                        skip(&d.id, e.to_string())?;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    summary.placeholders = templates.iter().map(|t| t.placeholders().count()).sum();
    write_with(&a.out, |out| write_templates_jsonl(out, &templates))?;
    log::info!("{} templates from {} dialogues", templates.len(), summary.dialogues);
    print_json(&json!({
        "dialogues": summary.dialogues,
        "templates": templates.len(),
        "placeholders": summary.placeholders,
        "skipped": {
            "missing_query": summary.missing_query,
            "ambiguous": summary.ambiguous,
            "no_entities": summary.no_entities,
            "invalid": summary.failed,
        },
    }))
}

fn load_templates(path: &Path) -> Result<Vec<Template>> {
    require_file(path)?;
    Ok(read_templates(path)?)
}

fn write_corpus(path: &Path, corpus: &GeneratedCorpus) -> Result<()> {
    write_with(path, |out| corpus.write_jsonl(out))
}

pub fn generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    let templates = load_templates(&a.templates)?;
    let mut cfg = GenerationConfig {
        seed,
        templates_per_iteration: a.per_iteration,
        iterations: a.iterations,
        result_cap: a.result_cap,
        ..GenerationConfig::default()
    };
    let table_kb = || -> Result<TableKb> {
        match (&a.camrest, &a.kb) {
            (Some(dir), _) => {
                let db = dir.join("CamRestDB.json");
                require_file(&db)?;
                Ok(camrest::load_kb(&db)?)
            }
            (None, Some(kb)) => load_table(kb),
            (None, None) => Err(invalid("--kb is required")),
        }
    };
    match a.mode {
        Mode::Batch => {
            cfg.mode = GenerationMode::TableBatch;
            let kb = table_kb()?;
            let corpus = generate_table(&templates, &kb, &cfg)?;
            write_corpus(&a.out, &corpus)?;
            log::info!("{} dialogues from {} templates", corpus.len(), templates.len());
            print_json(&json!({"dialogues": corpus.len(), "templates": corpus.stats}))
        }
        Mode::PerKb => {
            cfg.mode = GenerationMode::TablePerKb;
            let dir = a.kbs.as_deref().ok_or_else(|| invalid("--kbs is required for per-kb mode"))?;
            require_dir(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.retain(|p| p.extension().is_some_and(|e| e == "json" || e == "csv"));
            paths.sort();
            let mut kbs = Vec::with_capacity(paths.len());
            for p in &paths {
                let sample = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                kbs.push((sample, load_table(p)?));
            }
            let results = generate_per_kb(&templates, &kbs, &cfg);
            let mut merged = GeneratedCorpus::default();
            let mut samples = BTreeMap::new();
            let mut failures = Vec::new();
            for (sample, r) in results {
                match r {
                    Ok(c) => {
                        samples.insert(sample, json!({"dialogues": c.len()}));
                        merged.dialogues.extend(c.dialogues);
                    }
                    Err(e) => {
                        log::error!("sample {sample}: {e}");
                        samples.insert(sample.clone(), json!({"error": e.to_string()}));
                        failures.push(sample);
                    }
                }
            }
            write_corpus(&a.out, &merged)?;
            let ok = samples.len() - failures.len();
            let mean = if ok == 0 { 0.0 } else { merged.len() as f64 / ok as f64 };
            print_json(&json!({"dialogues": merged.len(), "mean_per_sample": mean, "samples": samples}))?;
            if failures.is_empty() {
                Ok(())
            } else {
                Err(invalid(format!("{} sample(s) failed: {}", failures.len(), failures.join(", "))))
            }
        }
        Mode::Graph => {
            cfg.mode = GenerationMode::GraphIterative;
            let path = a.kb.as_deref().ok_or_else(|| invalid("--kb is required for graph mode"))?;
            let graph = load_graph(path)?;
            let (corpus, history, ledger) = generate_graph_iterative(&templates, &graph, &cfg)?;
            write_corpus(&a.out, &corpus)?;
            let z_path = a.z_history.clone().unwrap_or_else(|| sibling(&a.out, ".zhistory.csv"));
            write_with(&z_path, |out| history.write_csv(out))?;
            let iterations: Vec<_> = history
                .iterations
                .iter()
                .map(|it| {
                    json!({
                        "iteration": it.iteration,
                        "generated": it.generated,
                        "skipped": it.skipped,
                        "total_z": it.total_z,
                        "zero_count": it.zero_count,
                    })
                })
                .collect();
            log::info!("{} dialogues; final sum of z {}", corpus.len(), ledger.total());
            print_json(&json!({"dialogues": corpus.len(), "iterations": iterations, "templates": corpus.stats}))
        }
    }
}

pub fn query(a: &QueryArgs) -> Result<()> {
    if let Some(sql) = &a.sql {
        let kb = load_table(a.kb.as_deref().expect("required by clap"))?;
        let q = tquery::parse(sql)?;
        let result = tquery::execute(&q, &kb)?;
        return print_json(&result);
    }
    let cypher = a.cypher.as_deref().expect("required by clap");
    let graph = load_graph(a.graph.as_deref().expect("required by clap"))?;
    let q = gquery::parse(cypher)?;
    for binding in match_pattern(&q, &graph, None, a.limit)? {
        let visible: BTreeMap<String, &String> = binding
            .iter()
            .filter(|(s, _)| q.return_slots().is_empty() || q.return_slots().contains(s))
            .map(|(s, n)| (s.to_string(), n))
            .collect();
        print_json(&visible)?;
    }
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let pred = read_dialogues(&a.pred)?;
    let gold = read_dialogues(&a.gold)?;
    let kb = a.kb.as_deref().map(load_kb).transpose()?;
    let (table, graph, lexicon) = match &kb {
        Some(Kb::Table(t)) => (Some(t), None, Some(EntityLexicon::from_table(t, None, Boundary::WordStart))),
        Some(Kb::Graph(g)) => (None, Some(g), Some(EntityLexicon::from_graph(g, a.min_len))),
        None => (None, None, None),
    };
    let goals = a.goals.as_deref().map(read_string_map).transpose()?;
    let domains = a.domains.as_deref().map(read_string_map).transpose()?;
    let train_entities: Option<BTreeSet<String>> = match (&a.train, &lexicon) {
        (Some(path), Some(lex)) => Some(corpus_entities(&read_dialogues(path)?, lex)),
        (Some(_), None) => return Err(invalid("--train needs --kb for its entity lexicon")),
        _ => None,
    };
    let ctx = ScoreContext {
        lexicon: lexicon.as_ref(),
        kb: table,
        goals: goals.as_ref(),
        graph,
        train_entities: train_entities.as_ref(),
        name_attribute: Some(&a.name_attribute),
        domains: domains.as_ref(),
    };
    let metrics: BTreeSet<Metric> = a.metrics.iter().copied().collect();
    let report = score_dialogues(&pred, &gold, &metrics, &ctx)?;
    if let Some(b) = report.bleu {
        log::info!("BLEU x100: {:.2}", b * 100.0);
    }
    print_json(&report)
}

pub fn memlm_train(a: &TrainArgs) -> Result<()> {
    let mut corpus = Vec::new();
    for p in &a.corpus {
        corpus.extend(read_dialogues(p)?);
    }
    let model = MemLm::train(&corpus, a.window)?;
    write_with(&a.out, |out| {
        model
            .write_to(out)
            .map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    print_json(&json!({
        "dialogues": corpus.len(),
        "histories": model.distinct_histories(),
        "nodes": model.node_count(),
        "pairs": model.pair_count(),
        "window": model.window(),
    }))
}

pub fn memlm_eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.model)?;
    let file = std::fs::File::open(&a.model).with_context(|| format!("opening {}", a.model.display()))?;
    let model = MemLm::read_from(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", a.model.display()))?;
    let test = read_dialogues(&a.test)?;
    let acc = model.evaluate(&test)?;
    if let Some(path) = &a.predictions {
        let pred: Vec<Dialogue> = test.iter().map(|d| model.predict(d)).collect();
        write_with(path, |out| write_dialogues_jsonl(out, &pred))?;
    }
    log::info!("accuracy {acc} over {} responses", acc.responses);
    print_json(&json!({"response_acc": acc.response_accuracy, "dialogue_acc": acc.dialogue_accuracy}))
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let dir = &a.out;
    if a.graph {
        let kg = synth_graph_corpus(a.nodes, a.dialogues, seed)?;
        write_with(&dir.join("graph.tsv"), |out| out.write_all(kg.graph.to_tsv_string().as_bytes()))?;
        write_with(&dir.join("dialogues.jsonl"), |out| write_dialogues_jsonl(out, &kg.dialogues))?;
        return print_json(&json!({
            "nodes": kg.graph.node_count(),
            "edges": kg.graph.edge_count(),
            "dialogues": kg.dialogues.len(),
        }));
    }
    let spec = SyntheticSpec {
        n_rows: a.rows,
        n_attributes: a.attributes,
        n_templates: a.templates,
        oov_fraction: a.oov_fraction,
        seed,
    };
    let c = synth_corpus(&spec)?;
    write_with(&dir.join("kb.json"), |out| out.write_all(c.kb.to_json_string().as_bytes()))?;
    write_with(&dir.join("templates.jsonl"), |out| write_templates_jsonl(out, &c.templates))?;
    for (name, ds) in [
        ("sources.jsonl", &c.sources),
        ("base.jsonl", &c.base),
        ("test.jsonl", &c.test),
        ("oov_test.jsonl", &c.oov_test),
    ] {
        write_with(&dir.join(name), |out| write_dialogues_jsonl(out, ds))?;
    }
    let mut queries = c.queries.clone();
    for split in [&c.test, &c.oov_test] {
        for (d, t) in split.iter().zip(&c.templates) {
            queries.insert(d.id.clone(), t.query.clone());
        }
    }
    write_json(&dir.join("queries.json"), &queries)?;
    print_json(&json!({
        "rows": c.kb.len(),
        "in_vocab_rows": c.in_vocab_rows.len(),
        "oov_rows": c.oov_rows.len(),
        "templates": c.templates.len(),
        "base": c.base.len(),
        "test": c.test.len(),
        "oov_test": c.oov_test.len(),
    }))
}



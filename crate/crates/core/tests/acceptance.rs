//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line. Run with `cargo test -p kedial --test acceptance -- --nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use common::*;
use kedial::genpipe::{generate_table, synth_corpus, synth_graph_corpus, GenerationConfig, GraphGenerator, SplitMix64, SyntheticSpec};
use kedial::gquery::match_pattern;
use kedial::kb::{write_dialogues_jsonl, Boundary, Dialogue, EntityLexicon, Speaker};
use kedial::ke::{delex_graph, delex_table, relex_with_binding, write_templates_jsonl};
use kedial::memlm::{MemLm, DEFAULT_WINDOW};
use kedial::report::to_canonical_json;
use kedial::score::{babi_accuracy, bleu, entity_f1, inform_success, score_dialogues, Metric, ScoreContext};
use kedial::tquery::{execute, parse};
use sha2::{Digest, Sha256};

#[test]
fn criterion_1_oov_embedding_effect() {
    let start = Instant::now();
    let spec = SyntheticSpec {
        n_rows: 40,
        oov_fraction: 0.5,
        n_templates: 20,
        seed: 13,
        ..SyntheticSpec::default()
    };
    let c = synth_corpus(&spec).unwrap();
    let combined: Vec<Dialogue> = c.test.iter().chain(&c.oov_test).cloned().collect();
    let lexicon = EntityLexicon::from_table(&c.kb, None, Boundary::WordStart);

    let base = MemLm::train(&c.base, DEFAULT_WINDOW).unwrap();
    let base_acc = base.evaluate(&combined).unwrap();
    let (mut oov_hits, mut oov_turns) = (0, 0);
    for d in &c.oov_test {
        let gold: Vec<&str> = d.turns().iter().filter(|t| t.speaker.is_system()).map(|t| t.text()).collect();
        for (g, p) in gold.iter().zip(base.respond(d)) {
            if !lexicon.match_entities(g).is_empty() {
                oov_turns += 1;
                oov_hits += usize::from(p == *g);
            }
        }
    }

    let ke = generate_table(&c.templates, &c.kb, &GenerationConfig::default()).unwrap();
    let mut augmented = c.base.clone();
    augmented.extend(ke.dialogues().cloned());
    let full = MemLm::train(&augmented, DEFAULT_WINDOW).unwrap();
    let full_acc = full.evaluate(&combined).unwrap();
    let full_oov = full.evaluate(&c.oov_test).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let pass = base_acc.response_accuracy <= 0.55
        && oov_turns > 0
        && oov_hits == 0
        && full_acc.response_accuracy == 1.0
        && full_acc.dialogue_accuracy == 1.0
        && full_oov.response_accuracy == 1.0
        && secs < 60.0;
    let detail = format!(
        "base-only {base_acc} (OOV entity turns {oov_hits}/{oov_turns}); base+KE {full_acc}, OOV split {full_oov}; {} KE dialogues; {secs:.1}s",
        ke.len()
    );
    assert!(criterion(1, "OOV embedding effect", pass, detail));
}

#[test]
fn criterion_2_query_engine_oracles() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(13);
    let mut table_ok = 0;
    for i in 0..1000 {
        let t = random_table(&mut rng);
        let q = random_table_query(&mut rng, &t);
        assert_eq!(parse(&q.to_string()).unwrap(), q, "case {i}: {q}");
        let got = execute(&q, &t.kb).unwrap_or_else(|e| panic!("case {i}: {q}: {e}"));
        let (columns, rows, indices) = table_oracle(&q, &t);
        if got.columns == columns && got.rows == rows && got.row_indices == indices {
            table_ok += 1;
        } else {
            eprintln!("table mismatch {i}: {q}\n  kb {:?}\n  got {:?}\n  want {:?}", t.kb.rows(), got.rows, rows);
        }
    }
    let mut graph_ok = 0;
    for i in 0..500 {
        let g = random_graph(&mut rng);
        let q = random_pattern(&mut rng, g.relations());
        let ledger = chance(&mut rng, 50).then(|| random_ledger(&mut rng, &g));
        let got = match_pattern(&q, &g, ledger.as_ref(), None).unwrap();
        let unique: BTreeSet<_> = got.iter().cloned().collect();
        let want = graph_oracle(&q, &g, ledger.as_ref());
        if unique.len() == got.len() && unique == want {
            graph_ok += 1;
        } else {
            eprintln!("graph mismatch {i}: {q}: got {} want {}", got.len(), want.len());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = table_ok == 1000 && graph_ok == 500 && secs < 120.0;
    assert!(criterion(
        2,
        "query engines match brute force",
        pass,
        format!("table {table_ok}/1000, graph {graph_ok}/500; {secs:.1}s")
    ));
}

#[test]
fn criterion_3_delex_relex_round_trip() {
    let start = Instant::now();
    let kb = planted_kb();
    let lexicon = EntityLexicon::from_table(&kb, None, Boundary::WordStart);
    let mut rng = SplitMix64::new(13);
    let mut exact = 0;
    let mut placeholders = 0;
    for i in 0..100 {
        let (d, query) = planted_dialogue(&mut rng, &kb, &format!("rt-{i:03}"));
        let t = delex_table(&d, &query, &kb, &lexicon).unwrap();
        placeholders += t.placeholders().count();
        let back = relex_with_binding(&t).unwrap();
        let same = serde_json::to_string(&back).unwrap() == serde_json::to_string(&d).unwrap();
        exact += usize::from(same);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = exact == 100 && placeholders > 0 && secs < 10.0;
    assert!(criterion(
        3,
        "delex/relex round trip",
        pass,
        format!("{exact}/100 byte-exact, {placeholders} placeholders; {secs:.2}s")
    ));
}

#[test]
fn criterion_4_cardinality_law() {
    let kb = planted_kb();
    let lexicon = EntityLexicon::from_table(&kb, None, Boundary::WordStart);
    let mut rng = SplitMix64::new(13);
    let attrs = ["food", "area", "pricerange"];
    let mut templates = Vec::new();
    let mut attempts = 0;
    while templates.len() < 50 {
        attempts += 1;
        assert!(attempts < 10_000, "could not build single-group templates");
        let row = &kb.rows()[rng.below(kb.len())];
        let a = rng.below(attrs.len());
        let b = rng.below(attrs.len());
        let (ia, ib) = (a + 1, b + 1);
        let query = if chance(&mut rng, 50) {
            format!("SELECT name, {} FROM restaurant WHERE {} = '{}'", attrs[a], attrs[a], row[ia])
        } else {
            format!("SELECT name FROM restaurant WHERE {} != '{}'", attrs[b], row[ib])
        };
        let d = dialogue(
            &format!("card-{}", templates.len()),
            &[
                (Speaker::Usr, &format!("i want {} food", row[1])),
                (Speaker::Sys, &format!("{} is in the {} and is {}", row[0], row[2], row[3])),
            ],
        );
        let t = delex_table(&d, &query, &kb, &lexicon).unwrap();
        if t.groups().len() == 1 {
            templates.push((t, query));
        }
    }
    let expected: usize = templates
        .iter()
        .map(|(_, q)| execute(&parse(q).unwrap(), &kb).unwrap().len())
        .sum();
    let only: Vec<_> = templates.into_iter().map(|(t, _)| t).collect();
    let corpus = generate_table(&only, &kb, &GenerationConfig::default()).unwrap();
    let pass = corpus.len() == expected;
    assert!(criterion(
        4,
        "cardinality law",
        pass,
        format!("generated {} vs sum of result sizes {expected} over 50 templates", corpus.len())
    ));
}

#[test]
fn criterion_5_z_ledger_dynamics() {
    let kg = synth_graph_corpus(200, 60, 13).unwrap();
    let lexicon = EntityLexicon::from_graph(&kg.graph, 5);
    let templates: Vec<_> = kg
        .dialogues
        .iter()
        .filter_map(|d| delex_graph(d, &kg.graph, &lexicon).ok())
        .collect();
    let cfg = GenerationConfig {
        templates_per_iteration: 20,
        iterations: 20,
        ..GenerationConfig::default()
    };
    let mut generator = GraphGenerator::new(&templates, &kg.graph, &cfg);
    let usable = generator.templates().len();
    let mut zero_ok = true;
    let mut sum_ok = true;
    let mut trace = Vec::new();
    for _ in 0..cfg.iterations {
        let admissible = generator.templates().iter().any(|(_, q)| {
            !match_pattern(q, &kg.graph, Some(generator.ledger()), Some(1))
                .unwrap()
                .is_empty()
        });
        let (total, zeros) = (generator.ledger().total(), generator.ledger().zero_count());
        let stats = generator.step().clone();
        zero_ok &= stats.zero_count >= zeros;
        if admissible {
            sum_ok &= stats.total_z < total;
        } else {
            sum_ok &= stats.total_z == total;
        }
        trace.push(format!("{}:{}/{}", stats.iteration, stats.total_z, stats.zero_count));
    }
    let (corpus, _, _) = generator.finish();
    let pass = usable > 0 && zero_ok && sum_ok;
    assert!(criterion(
        5,
        "Z-ledger dynamics",
        pass,
        format!(
            "{usable} templates, {} dialogues; iteration:sum(z)/zeros {}",
            corpus.len(),
            trace.join(" ")
        )
    ));
}

#[test]
fn criterion_6_metric_hand_cases() {
    let lexicon = EntityLexicon::builder().with("a", "x").with("b", "x").with("c", "x").build();
    let f = entity_f1(&["a b"], &["b c"], &lexicon).unwrap();
    let f1_ok = f.f1 == 0.5 && f.precision == 0.5 && f.recall == 0.5;

    let pred = ["the phone number is 01223 and the address is main road", "thank you goodbye"];
    let bleu_ok = (bleu(&pred, &pred).unwrap() - 1.0).abs() <= 1e-9;

    let kb = planted_kb();
    let mut rng = SplitMix64::new(13);
    let mut dialogues = Vec::new();
    let mut goals = BTreeMap::new();
    for i in 0..200 {
        let id = format!("is-{i:03}");
        let row = &kb.rows()[rng.below(kb.len())];
        let other = &kb.rows()[rng.below(kb.len())];
        let venue = if chance(&mut rng, 70) { row } else { other };
        let mut sys = format!("try {}", venue[0]);
        if chance(&mut rng, 60) {
            sys.push_str(&format!(" in the {}", venue[2]));
        }
        if chance(&mut rng, 60) {
            sys.push_str(&format!(" , it is {}", venue[3]));
        }
        dialogues.push(dialogue(&id, &[(Speaker::Usr, "find me a place"), (Speaker::Sys, &sys)]));
        goals.insert(id, format!("SELECT area, pricerange FROM restaurant WHERE food = '{}'", row[1]));
    }
    let s = inform_success(&dialogues, &goals, &kb, "name").unwrap();
    let violations = s.per_dialogue.iter().filter(|(i, ok)| *ok && !*i).count();
    let is_ok = violations == 0 && s.success <= s.inform && s.inform > 0.0 && s.success < s.inform;

    let gold: Vec<Vec<String>> = (0..10)
        .map(|d| (0..if d < 5 { 5 } else { 6 }).map(|r| format!("response {d} {r}")).collect())
        .collect();
    let mut wrong = gold.clone();
    wrong[3][4] = "something else".into();
    let acc = babi_accuracy(&wrong, &gold).unwrap();
    let babi_ok = acc.responses == 55 && acc.response_accuracy == 54.0 / 55.0 && acc.dialogue_accuracy == 9.0 / 10.0;

    let pass = f1_ok && bleu_ok && is_ok && babi_ok;
    assert!(criterion(
        6,
        "metric hand cases",
        pass,
        format!(
            "F1 {:.3}; self-BLEU {:.9}; inform {:.3} success {:.3} ({violations} violations / 200); bAbI {acc}",
            f.f1,
            bleu(&pred, &pred).unwrap(),
            s.inform,
            s.success
        )
    ));
}

#[test]
fn criterion_7_camrest_counts() {
    let Some(dir) = std::env::var_os("KEDIAL_CAMREST_DIR") else {
        println!("criterion 7 [SKIPPED] CamRest counts: set KEDIAL_CAMREST_DIR to a directory holding CamRest676.json and CamRestDB.json");
        return;
    };
    let dir = Path::new(&dir);
    let kb = kedial::camrest::load_kb(&dir.join("CamRestDB.json")).unwrap();
    let dialogues = kedial::camrest::load_dialogues(&dir.join("CamRest676.json")).unwrap();
    let lexicon = EntityLexicon::from_table(&kb, None, Boundary::WordStart);
    let mut templates = Vec::new();
    for gd in dialogues.iter().take(kedial::camrest::TRAIN_DIALOGUES) {
        match delex_table(&gd.dialogue, &gd.query, &kb, &lexicon) {
            Ok(t) if t.placeholders().next().is_some() => templates.push(t),
            Ok(_) => println!("  skipped {}: no query entity mentioned", gd.dialogue.id),
            Err(e) => println!("  skipped {}: {e}", gd.dialogue.id),
        }
    }
    let corpus = generate_table(&templates, &kb, &GenerationConfig::default()).unwrap();
    let within = |x: usize, target: f64| (x as f64 - target).abs() <= 0.15 * target;
    let pass = within(templates.len(), 161.0) && within(corpus.len(), 32_361.0);
    assert!(criterion(
        7,
        "CamRest counts",
        pass,
        format!("{} templates (target 161), {} KE dialogues (target 32361)", templates.len(), corpus.len())
    ));
}

/// synth -> generate -> train -> predict -> score, writing every artifact.
fn pipeline(dir: &Path) -> BTreeMap<String, String> {
    let c = synth_corpus(&SyntheticSpec::default()).unwrap();
    let write = |name: &str, bytes: Vec<u8>| std::fs::write(dir.join(name), bytes).unwrap();
    write("kb.json", c.kb.to_json_string().into_bytes());
    let mut buf = Vec::new();
    write_templates_jsonl(&mut buf, &c.templates).unwrap();
    write("templates.jsonl", buf);
    for (name, ds) in [("base.jsonl", &c.base), ("oov_test.jsonl", &c.oov_test)] {
        let mut buf = Vec::new();
        write_dialogues_jsonl(&mut buf, ds).unwrap();
        write(name, buf);
    }
    let ke = generate_table(&c.templates, &c.kb, &GenerationConfig::default()).unwrap();
    let mut buf = Vec::new();
    ke.write_jsonl(&mut buf).unwrap();
    write("ke.jsonl", buf);

    let mut train = c.base.clone();
    train.extend(ke.dialogues().cloned());
    let model = MemLm::train(&train, DEFAULT_WINDOW).unwrap();
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    write("model.bin", buf);
    let pred: Vec<Dialogue> = c.oov_test.iter().map(|d| model.predict(d)).collect();
    let mut buf = Vec::new();
    write_dialogues_jsonl(&mut buf, &pred).unwrap();
    write("pred.jsonl", buf);

    let lexicon = EntityLexicon::from_table(&c.kb, None, Boundary::WordStart);
    let goals: BTreeMap<String, String> = c
        .oov_test
        .iter()
        .zip(&c.templates)
        .map(|(d, t)| (d.id.clone(), t.query.clone()))
        .collect();
    let ctx = ScoreContext {
        lexicon: Some(&lexicon),
        kb: Some(&c.kb),
        goals: Some(&goals),
        ..ScoreContext::default()
    };
    let metrics: BTreeSet<Metric> = [Metric::Bleu, Metric::F1, Metric::Inform, Metric::Babi].into();
    let report = score_dialogues(&pred, &c.oov_test, &metrics, &ctx).unwrap();
    write("report.json", to_canonical_json(&report).unwrap().into_bytes());

    let mut hashes = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let digest = Sha256::digest(std::fs::read(&path).unwrap());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hashes.insert(path.file_name().unwrap().to_string_lossy().into_owned(), hex);
    }
    hashes
}

#[test]
fn criterion_8_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let report = std::fs::read_to_string(a.path().join("report.json")).unwrap();
    let pass = first.len() == 8 && first == second;
    assert!(criterion(
        8,
        "pipeline determinism",
        pass,
        format!("{} files identical by SHA-256; report {}", first.len(), report.trim())
    ));
}

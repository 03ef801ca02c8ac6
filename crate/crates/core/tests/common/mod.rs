#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use kedial::genpipe::SplitMix64;
use kedial::gquery::{GraphQuery, PatternEdge, Slot, SlotBinding, ZLedger};
use kedial::kb::{Dialogue, GraphKb, Speaker, TableKb, Turn};
use kedial::tquery::{Aggregate, CmpOp, Constraint, Having, Selection, TableQuery};

/// Prints one acceptance line and returns `pass`.
pub fn criterion(id: u32, name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id} [{verdict}] {name}: {detail}");
    pass
}

pub fn pick<'a, T>(rng: &mut SplitMix64, items: &'a [T]) -> &'a T {
    &items[rng.below(items.len())]
}

pub fn chance(rng: &mut SplitMix64, percent: usize) -> bool {
    rng.below(100) < percent
}

pub fn dialogue(id: &str, turns: &[(Speaker, &str)]) -> Dialogue {
    Dialogue::new(id, turns.iter().map(|&(s, t)| Turn::new(s, t).unwrap()).collect()).unwrap()
}

// ---- table KBs ----

const TEXT_VALUES: [&str; 6] = ["red", "Red", "blue", "green light", "GREEN light", "amber"];

#[derive(Clone, Debug)]
pub struct RandomTable {
    pub kb: TableKb,
    pub numeric: Vec<bool>,
    pub unit: &'static str,
}

/// At most 8 rows and 4 attributes. Attribute 0 is always text; numeric
/// columns hold small integers sharing one unit suffix.
pub fn random_table(rng: &mut SplitMix64) -> RandomTable {
    let n_attrs = 1 + rng.below(4);
    let n_rows = 1 + rng.below(8);
    let unit = if chance(rng, 50) { "" } else { " miles" };
    let numeric: Vec<bool> = (0..n_attrs).map(|i| i > 0 && chance(rng, 50)).collect();
    let attributes = (0..n_attrs).map(|i| format!("a{i}")).collect();
    let rows = (0..n_rows)
        .map(|_| {
            numeric
                .iter()
                .map(|&num| {
                    if num {
                        format!("{}{unit}", rng.below(10))
                    } else {
                        pick(rng, &TEXT_VALUES).to_string()
                    }
                })
                .collect()
        })
        .collect();
    RandomTable {
        kb: TableKb::new("t", attributes, rows).unwrap(),
        numeric,
        unit,
    }
}

pub fn random_table_query(rng: &mut SplitMix64, t: &RandomTable) -> TableQuery {
    let attrs = t.kb.attributes();
    let select = if chance(rng, 20) {
        Selection::All
    } else {
        let mut order: Vec<usize> = (0..attrs.len()).collect();
        rng.shuffle(&mut order);
        order.truncate(1 + rng.below(attrs.len()));
        Selection::Attributes(order.into_iter().map(|i| attrs[i].clone()).collect())
    };
    let mut constraints = Vec::new();
    for _ in 0..rng.below(3) {
        let i = rng.below(attrs.len());
        let (op, value) = if t.numeric[i] {
            let op = *pick(rng, &[CmpOp::Eq, CmpOp::Neq, CmpOp::Lt, CmpOp::Gt, CmpOp::Leq, CmpOp::Geq]);
            let v = rng.below(10);
            // Eq/Neq compare as text, so spell the unit out half the time.
            let value = if !op.is_numeric() && chance(rng, 50) {
                format!("{v}{}", t.unit)
            } else {
                v.to_string()
            };
            (op, value)
        } else {
            (*pick(rng, &[CmpOp::Eq, CmpOp::Neq]), pick(rng, &TEXT_VALUES).to_string())
        };
        constraints.push(Constraint {
            op,
            attribute: attrs[i].clone(),
            value,
        });
    }
    let text_cols: Vec<usize> = (0..attrs.len()).filter(|&i| !t.numeric[i]).collect();
    let num_cols: Vec<usize> = (0..attrs.len()).filter(|&i| t.numeric[i]).collect();
    let group_by = chance(rng, 30).then(|| attrs[*pick(rng, &text_cols)].clone());
    let having = (!num_cols.is_empty() && chance(rng, 40)).then(|| Having {
        attribute: attrs[*pick(rng, &num_cols)].clone(),
        aggregate: *pick(rng, &[Aggregate::Min, Aggregate::Max, Aggregate::Sum, Aggregate::Avg]),
        argument: attrs[*pick(rng, &num_cols)].clone(),
    });
    TableQuery {
        select,
        from: "t".into(),
        constraints,
        group_by,
        having,
    }
}

fn norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn int_of(s: &str) -> i64 {
    s.trim_end_matches(" miles").trim().parse().unwrap()
}

/// Brute-force evaluation: (columns, rows, row indices).
pub fn table_oracle(q: &TableQuery, t: &RandomTable) -> (Vec<String>, Vec<Vec<String>>, Vec<usize>) {
    let kb = &t.kb;
    let idx = |a: &str| kb.attributes().iter().position(|x| x == a).unwrap();
    let mut keep = Vec::new();
    for (r, row) in kb.rows().iter().enumerate() {
        let mut ok = true;
        for c in &q.constraints {
            let v = &row[idx(&c.attribute)];
            ok &= match c.op {
                CmpOp::Eq => norm(v) == norm(&c.value),
                CmpOp::Neq => norm(v) != norm(&c.value),
                CmpOp::Lt => int_of(v) < int_of(&c.value),
                CmpOp::Gt => int_of(v) > int_of(&c.value),
                CmpOp::Leq => int_of(v) <= int_of(&c.value),
                CmpOp::Geq => int_of(v) >= int_of(&c.value),
            };
        }
        if ok {
            keep.push(r);
        }
    }
    if let Some(h) = &q.having {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &r in &keep {
            let key = q.group_by.as_ref().map(|g| norm(&kb.rows()[r][idx(g)])).unwrap_or_default();
            groups.entry(key).or_default().push(r);
        }
        let mut survivors = Vec::new();
        for members in groups.values() {
            let vals: Vec<i64> = members.iter().map(|&r| int_of(&kb.rows()[r][idx(&h.argument)])).collect();
            let n = vals.len() as i64;
            let sum: i64 = vals.iter().sum();
            let target = match h.aggregate {
                Aggregate::Min => *vals.iter().min().unwrap(),
                Aggregate::Max => *vals.iter().max().unwrap(),
                Aggregate::Sum => sum,
                Aggregate::Avg => (2 * sum + n) / (2 * n),
            };
            for &r in members {
                if int_of(&kb.rows()[r][idx(&h.attribute)]) == target {
                    survivors.push(r);
                }
            }
        }
        survivors.sort();
        keep = survivors;
    }
    let mut columns: Vec<String> = match &q.select {
        Selection::All => kb.attributes().to_vec(),
        Selection::Attributes(a) => a.clone(),
    };
    let extra = q
        .constraints
        .iter()
        .map(|c| c.attribute.clone())
        .chain(q.group_by.clone())
        .chain(q.having.iter().flat_map(|h| [h.attribute.clone(), h.argument.clone()]));
    for a in extra {
        if !columns.contains(&a) {
            columns.push(a);
        }
    }
    let rows = keep
        .iter()
        .map(|&r| columns.iter().map(|c| kb.rows()[r][idx(c)].clone()).collect())
        .collect();
    (columns, rows, keep)
}

// ---- graph KBs ----

pub const RELATIONS: [&str; 3] = ["likes", "knows", "owns"];

/// Up to 30 nodes over three relations; a few self loops.
pub fn random_graph(rng: &mut SplitMix64) -> GraphKb {
    let n = 2 + rng.below(29);
    let m = 1 + rng.below(3 * n);
    let mut triples = Vec::new();
    for _ in 0..m {
        let h = rng.below(n);
        let t = if chance(rng, 5) { h } else { rng.below(n) };
        triples.push((format!("v{h:02}"), pick(rng, &RELATIONS).to_string(), format!("v{t:02}")));
    }
    GraphKb::from_triples(triples)
}

/// A connected pattern of 1..=3 edges.
pub fn random_pattern(rng: &mut SplitMix64, relations: &[String]) -> GraphQuery {
    let mut slots = 2u32;
    let rel = |rng: &mut SplitMix64| pick(rng, relations).clone();
    let mut pattern = vec![if chance(rng, 5) {
        slots = 1;
        PatternEdge {
            head: Slot(1),
            relation: rel(rng),
            tail: Slot(1),
        }
    } else {
        PatternEdge {
            head: Slot(1),
            relation: rel(rng),
            tail: Slot(2),
        }
    }];
    for _ in 0..rng.below(3) {
        let old = Slot(1 + rng.below(slots as usize) as u32);
        let other = if chance(rng, 25) {
            Slot(1 + rng.below(slots as usize) as u32)
        } else {
            slots += 1;
            Slot(slots)
        };
        let (head, tail) = if chance(rng, 50) { (old, other) } else { (other, old) };
        pattern.push(PatternEdge {
            head,
            relation: rel(rng),
            tail,
        });
    }
    let mut ret: Vec<Slot> = (1..=slots).map(Slot).collect();
    rng.shuffle(&mut ret);
    ret.truncate(1 + rng.below(slots as usize));
    GraphQuery::new(pattern, ret, chance(rng, 50)).unwrap()
}

/// Some nodes zeroed, some left out entirely.
pub fn random_ledger(rng: &mut SplitMix64, g: &GraphKb) -> ZLedger {
    let mut z = ZLedger::from_graph(g);
    for n in g.nodes() {
        if chance(rng, 30) {
            z.set(n, 0);
        }
    }
    z
}

/// Every injective slot assignment, checked edge by edge.
pub fn graph_oracle(q: &GraphQuery, g: &GraphKb, ledger: Option<&ZLedger>) -> BTreeSet<SlotBinding> {
    let slots: BTreeSet<Slot> = q.pattern().iter().flat_map(|e| [e.head, e.tail]).collect();
    let slots: Vec<Slot> = slots.into_iter().collect();
    let triples: BTreeSet<(String, String, String)> = g
        .triples()
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect();
    let allowed = |n: &str| match (q.z_guarded(), ledger) {
        (true, Some(z)) => z.get(n).unwrap_or(0) > 0,
        _ => true,
    };
    let mut out = BTreeSet::new();
    let mut current: Vec<&str> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn rec<'g>(
        k: usize,
        slots: &[Slot],
        g: &'g GraphKb,
        q: &GraphQuery,
        triples: &BTreeSet<(String, String, String)>,
        allowed: &dyn Fn(&str) -> bool,
        current: &mut Vec<&'g str>,
        out: &mut BTreeSet<SlotBinding>,
    ) {
        let at = |s: Slot, cur: &[&'g str]| slots.iter().position(|&x| x == s).filter(|&i| i < cur.len()).map(|i| cur[i]);
        let consistent = q.pattern().iter().all(|e| match (at(e.head, current), at(e.tail, current)) {
            (Some(h), Some(t)) => triples.contains(&(h.to_string(), e.relation.clone(), t.to_string())),
            _ => true,
        });
        if !consistent {
            return;
        }
        if k == slots.len() {
            out.insert(slots.iter().zip(current.iter()).map(|(&s, &n)| (s, n.to_string())).collect());
            return;
        }
        for n in g.nodes() {
            if current.contains(&n.as_str()) || !allowed(n) {
                continue;
            }
            current.push(n);
            rec(k + 1, slots, g, q, triples, allowed, current, out);
            current.pop();
        }
    }
    rec(0, &slots, g, q, &triples, &allowed, &mut current, &mut out);
    out
}

// ---- delex/relex fixtures ----

pub fn planted_kb() -> TableKb {
    let rows = [
        ["curry garden", "indian", "east", "expensive"],
        ["pizza hut fen ditton", "italian", "centre", "moderate"],
        ["Golden House", "chinese", "north", "cheap"],
        ["la margherita", "italian", "west", "cheap"],
        ["Saigon City", "vietnamese", "south", "moderate"],
        ["the nirala", "indian", "north", "moderate"],
    ];
    TableKb::new(
        "restaurant",
        vec!["name".into(), "food".into(), "area".into(), "pricerange".into()],
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
    )
    .unwrap()
}

const FILLER: [&str; 10] = ["i", "want", "some", "please", "okay", "thanks", "what", "about", "is", "it"];

/// A dialogue mentioning attribute values of one or two KB rows verbatim,
/// plus its goal query.
pub fn planted_dialogue(rng: &mut SplitMix64, kb: &TableKb, id: &str) -> (Dialogue, String) {
    let primary = rng.below(kb.len());
    let mut secondary = rng.below(kb.len());
    if secondary == primary {
        secondary = (primary + 1) % kb.len();
    }
    let attrs = kb.attributes();
    let n_turns = 2 * (1 + rng.below(3));
    let mut turns = Vec::new();
    for i in 0..n_turns {
        let speaker = if i % 2 == 0 { Speaker::Usr } else { Speaker::Sys };
        let mut words: Vec<String> = Vec::new();
        for _ in 0..1 + rng.below(4) {
            words.push(pick(rng, &FILLER).to_string());
        }
        if chance(rng, 80) {
            let row = if chance(rng, 75) { primary } else { secondary };
            let a = rng.below(attrs.len());
            let at = rng.below(words.len() + 1);
            words.insert(at, kb.rows()[row][a].clone());
        }
        turns.push(Turn::new(speaker, &words.join(" ")).unwrap());
    }
    let food = &kb.rows()[primary][1];
    let query = format!("SELECT name, area, pricerange FROM restaurant WHERE food = '{food}'");
    (Dialogue::new(id, turns).unwrap(), query)
}

// ---- metric oracles ----

/// Textbook corpus BLEU-4 written against token vectors with linear
/// counting, using the same effective-order and epsilon conventions.
pub fn reference_bleu(pred: &[String], refs: &[String]) -> f64 {
    let mut clipped = [0f64; 4];
    let mut total = [0f64; 4];
    let mut c = 0f64;
    let mut r = 0f64;
    for (p, g) in pred.iter().zip(refs) {
        let p: Vec<String> = p.split_whitespace().map(String::from).collect();
        let g: Vec<String> = g.split_whitespace().map(String::from).collect();
        c += p.len() as f64;
        r += g.len() as f64;
        for n in 1..=4usize {
            if p.len() < n {
                continue;
            }
            let grams = |t: &[String]| -> Vec<Vec<String>> {
                let mut out = Vec::new();
                let mut i = 0;
                while i + n <= t.len() {
                    out.push(t[i..i + n].to_vec());
                    i += 1;
                }
                out
            };
            let pg = grams(&p);
            let rg = grams(&g);
            let mut seen: Vec<&Vec<String>> = Vec::new();
            for gram in &pg {
                if seen.contains(&gram) {
                    continue;
                }
                seen.push(gram);
                let in_p = pg.iter().filter(|x| *x == gram).count();
                let in_r = rg.iter().filter(|x| *x == gram).count();
                clipped[n - 1] += in_p.min(in_r) as f64;
                total[n - 1] += in_p as f64;
            }
        }
    }
    if c == 0.0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0.0;
    for n in 0..4 {
        if total[n] == 0.0 {
            continue;
        }
        let m = if clipped[n] == 0.0 { 1e-9 } else { clipped[n] };
        log_sum += (m / total[n]).ln();
        orders += 1.0;
    }
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / orders).exp()
}

/// (tp, fp, fn) from per-turn entity sets.
pub fn f1_counts(pred: &[BTreeSet<String>], gold: &[BTreeSet<String>]) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fneg = 0;
    for (p, g) in pred.iter().zip(gold) {
        for e in p {
            if g.contains(e) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        fneg += g.iter().filter(|e| !p.contains(*e)).count();
    }
    (tp, fp, fneg)
}

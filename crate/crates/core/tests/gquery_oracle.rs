mod common;

use std::collections::BTreeSet;

use common::{graph_oracle, random_graph, random_ledger, random_pattern};
use kedial::genpipe::SplitMix64;
use kedial::gquery::{derive_query_from_dialogue, match_pattern, parse, GraphQueryError, Slot, ZLedger};
use kedial::kb::{EntityLexicon, GraphKb, Speaker};
use proptest::prelude::*;

fn movies() -> GraphKb {
    GraphKb::from_triples([
        ("Christian Bale", "ActorsIn", "The Dark Knight"),
        ("Christian Bale", "ActorsIn", "The Prestige"),
        ("Michael Caine", "ActorsIn", "The Dark Knight"),
        ("The Dark Knight", "DirectedBy", "Christopher Nolan"),
        ("The Prestige", "DirectedBy", "Christopher Nolan"),
        ("The Dark Knight", "HasGenre", "thriller"),
    ])
}

#[test]
fn derived_query_matches_its_source_binding() {
    let g = movies();
    let lex = EntityLexicon::from_graph(&g, 5);
    let d = common::dialogue(
        "m",
        &[
            (Speaker::Usr, "I liked The Prestige"),
            (Speaker::Sys, "Then try The Dark Knight, also with Christian Bale"),
        ],
    );
    let derived = derive_query_from_dialogue(&d, &g, &lex).unwrap();
    let all = match_pattern(&derived.query, &g, None, None).unwrap();
    assert!(all.contains(&derived.binding));
    assert_eq!(derived.binding[&Slot(1)], "The Prestige");
    assert!(!derived.partial);
}

#[test]
fn z_guard_needs_a_ledger() {
    let g = movies();
    let q = parse("MATCH n1-[ActorsIn]->n2 WHERE Z > 0 RETURN n1, n2").unwrap();
    let mut z = ZLedger::from_graph(&g);
    z.set("Christian Bale", 0);
    assert_eq!(match_pattern(&q, &g, None, None).unwrap().len(), 3);
    assert_eq!(match_pattern(&q, &g, Some(&z), None).unwrap().len(), 1);
    let unguarded = q.clone().with_z_guard(false);
    assert_eq!(match_pattern(&unguarded, &g, Some(&z), None).unwrap().len(), 3);
}

#[test]
fn ledger_consumption() {
    let g = movies();
    let mut z = ZLedger::from_graph(&g);
    assert_eq!(z.get("The Dark Knight"), Some(4));
    let before = z.total();
    let binding = [(Slot(1), "Michael Caine".to_string()), (Slot(2), "The Dark Knight".to_string())].into();
    z.consume(&binding).unwrap();
    z.consume(&binding).unwrap();
    assert_eq!(z.get("Michael Caine"), Some(0));
    assert_eq!(z.total(), before - 3);
    let missing = [(Slot(1), "Nobody".to_string())].into();
    assert_eq!(z.consume(&missing), Err(GraphQueryError::MissingLedgerNode("Nobody".into())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matcher_equals_exhaustive_enumeration(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng);
        let q = random_pattern(&mut rng, g.relations());
        let ledger = (seed % 2 == 0).then(|| random_ledger(&mut rng, &g));
        let got = match_pattern(&q, &g, ledger.as_ref(), None).unwrap();
        let unique: BTreeSet<_> = got.iter().cloned().collect();
        prop_assert_eq!(unique.len(), got.len());
        prop_assert_eq!(unique, graph_oracle(&q, &g, ledger.as_ref()));
    }

    #[test]
    fn limit_returns_a_prefix(seed in any::<u64>(), limit in 0usize..5) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng);
        let q = random_pattern(&mut rng, g.relations());
        let all = match_pattern(&q, &g, None, None).unwrap();
        let some = match_pattern(&q, &g, None, Some(limit)).unwrap();
        prop_assert_eq!(&all[..limit.min(all.len())], &some[..]);
    }

    #[test]
    fn display_reparses(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng);
        let q = random_pattern(&mut rng, g.relations());
        prop_assert_eq!(parse(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn consume_never_increases_z(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let g = random_graph(&mut rng);
        let q = random_pattern(&mut rng, g.relations());
        let mut z = random_ledger(&mut rng, &g);
        for b in match_pattern(&q, &g, None, Some(5)).unwrap() {
            let (total, zeros) = (z.total(), z.zero_count());
            z.consume(&b).unwrap();
            prop_assert!(z.total() <= total);
            prop_assert!(z.zero_count() >= zeros);
        }
    }
}

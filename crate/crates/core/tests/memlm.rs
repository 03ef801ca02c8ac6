mod common;

use std::collections::BTreeSet;

use common::pick;
use kedial::genpipe::SplitMix64;
use kedial::kb::{Dialogue, Speaker, Turn};
use kedial::memlm::{history_tokens, MemLm, MemLmError, EMPTY_GENERATION};
use proptest::prelude::*;

const VOCAB: [&str; 8] = ["hi", "table", "for", "two", "please", "ok", "paris", "cheap"];

fn random_dialogue(rng: &mut SplitMix64, id: &str) -> Dialogue {
    let n = 2 * (1 + rng.below(3));
    let turns = (0..n)
        .map(|i| {
            let speaker = if i % 2 == 0 { Speaker::Usr } else { Speaker::Sys };
            let words: Vec<&str> = (0..1 + rng.below(3)).map(|_| *pick(rng, &VOCAB)).collect();
            Turn::new(speaker, &words.join(" ")).unwrap()
        })
        .collect();
    Dialogue::new(id, turns).unwrap()
}

fn corpus(rng: &mut SplitMix64, n: usize) -> Vec<Dialogue> {
    (0..n).map(|i| random_dialogue(rng, &format!("d{i}"))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn counts_distinct_windowed_histories(seed in any::<u64>(), window in 1usize..12) {
        let mut rng = SplitMix64::new(seed);
        let n = 1 + rng.below(10);
        let data = corpus(&mut rng, n);
        let m = MemLm::train(&data, window).unwrap();
        let mut histories = BTreeSet::new();
        let mut pairs = 0;
        for d in &data {
            for (i, t) in d.turns().iter().enumerate() {
                if t.speaker.is_system() {
                    let h = history_tokens(d, i);
                    histories.insert(h[h.len().saturating_sub(window)..].to_vec());
                    pairs += 1;
                }
            }
        }
        prop_assert_eq!(m.distinct_histories(), histories.len());
        prop_assert_eq!(m.pair_count(), pairs as u64);
    }

    #[test]
    fn memorizes_when_histories_are_unambiguous(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let n = 1 + rng.below(10);
        // a unique opening token makes every full history distinct
        let data: Vec<Dialogue> = corpus(&mut rng, n)
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut turns = d.turns().to_vec();
                turns[0] = Turn::new(Speaker::Usr, &format!("ticket{i} {}", turns[0].text())).unwrap();
                Dialogue::new(d.id.clone(), turns).unwrap()
            })
            .collect();
        let m = MemLm::train(&data, 200).unwrap();
        let acc = m.evaluate(&data).unwrap();
        prop_assert_eq!(acc.response_accuracy, 1.0);
        prop_assert_eq!(acc.dialogue_accuracy, 1.0);
        for d in &data {
            prop_assert_eq!(&m.predict(d), d);
        }
    }

    #[test]
    fn serialization_round_trips_byte_for_byte(seed in any::<u64>(), window in 1usize..60) {
        let mut rng = SplitMix64::new(seed);
        let n = 1 + rng.below(8);
        let m = MemLm::train(&corpus(&mut rng, n), window).unwrap();
        let mut a = Vec::new();
        m.write_to(&mut a).unwrap();
        let back = MemLm::read_from(a.as_slice()).unwrap();
        prop_assert_eq!(&back, &m);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        prop_assert_eq!(a.clone(), b);
        let cut = rng.below(a.len());
        prop_assert!(MemLm::read_from(&a[..cut]).is_err());
    }

    #[test]
    fn coverage_grows_with_training_data(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let train = corpus(&mut rng, 12);
        let test = corpus(&mut rng, 6);
        let mut last = 0;
        for k in 1..=train.len() {
            let m = MemLm::train(&train[..k], 4).unwrap();
            let covered = test
                .iter()
                .flat_map(|d| m.respond(d))
                .filter(|r| r != EMPTY_GENERATION)
                .count();
            prop_assert!(covered >= last);
            last = covered;
        }
    }
}

#[test]
fn unseen_history_gives_the_empty_marker() {
    let mut rng = SplitMix64::new(13);
    let m = MemLm::train(&corpus(&mut rng, 5), 10).unwrap();
    assert_eq!(m.generate(&["zebra"]).unwrap(), [EMPTY_GENERATION]);
    assert!(matches!(m.generate(&[]), Err(MemLmError::EmptyHistory)));
}

#[test]
fn rejects_bad_inputs() {
    let mut rng = SplitMix64::new(13);
    let data = corpus(&mut rng, 3);
    assert!(matches!(MemLm::train(&data, 0), Err(MemLmError::InvalidWindow)));
    assert!(matches!(MemLm::train(&[], 5), Err(MemLmError::EmptyCorpus)));
    assert!(matches!(MemLm::read_from(&b"NOPE\x01\0\0\0"[..]), Err(MemLmError::Format(_))));
}

#[path = "support/bleu_oracle.rs"]
mod oracle;

use nncaption_core::metrics::{
    bleu4, bleu4_from_lines, brevity_penalty, closest_ref_len, modified_precision, tokenize, MetricsError, TokenSeq,
};
use proptest::prelude::*;

fn seq(words: &[&str]) -> TokenSeq {
    words.iter().copied().collect()
}

const VOCAB: [&str; 6] = ["a", "cat", "dog", "on", "the", "mat"];

fn words(max: usize) -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(&VOCAB[..]), 0..=max)
}

fn corpus() -> impl Strategy<Value = (Vec<Vec<&'static str>>, Vec<Vec<Vec<&'static str>>>)> {
    prop::collection::vec(
        (
            words(9),
            prop::collection::vec(prop::collection::vec(prop::sample::select(&VOCAB[..]), 1..=9), 1..=3),
        ),
        1..=4,
    )
    .prop_map(|segs| segs.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force((cands, refs) in corpus()) {
        let c: Vec<TokenSeq> = cands.iter().map(|w| seq(w)).collect();
        let r: Vec<Vec<TokenSeq>> = refs.iter().map(|rs| rs.iter().map(|w| seq(w)).collect()).collect();
        let got = bleu4(&c, &r).unwrap();
        let want = oracle::bleu(&cands, &refs);
        for n in 0..4 {
            prop_assert_eq!(got.precisions[n].clipped_matches, want.clipped[n]);
            prop_assert_eq!(got.precisions[n].candidate_ngrams, want.total[n]);
            prop_assert!(got.precisions[n].clipped_matches <= got.precisions[n].candidate_ngrams);
        }
        prop_assert_eq!(got.candidate_len, want.cand_len);
        prop_assert_eq!(got.effective_ref_len, want.ref_len);
        prop_assert!((got.brevity_penalty - want.bp).abs() < 1e-12);
        prop_assert!((got.bleu4 - want.bleu).abs() < 1e-9, "{} vs {}", got.bleu4, want.bleu);
        prop_assert!((0.0..=1.0).contains(&got.bleu4));
    }

    #[test]
    fn candidate_equal_to_a_reference_scores_one(segs in prop::collection::vec(prop::collection::vec(prop::sample::select(&VOCAB[..]), 4..=9), 1..=4)) {
        let c: Vec<TokenSeq> = segs.iter().map(|w| seq(w)).collect();
        let r: Vec<Vec<TokenSeq>> = segs.iter().map(|w| vec![seq(w), seq(&["x"])]).collect();
        prop_assert_eq!(bleu4(&c, &r).unwrap().bleu4, 1.0);
    }

    #[test]
    fn duplicating_a_token_adds_at_most_one_clipped_match(w in prop::collection::vec(prop::sample::select(&VOCAB[..]), 1..=8), rw in prop::collection::vec(prop::sample::select(&VOCAB[..]), 1..=8), k in 0usize..8) {
        let refs = vec![vec![seq(&rw)]];
        let (c0, t0) = modified_precision(&[seq(&w)], &refs, 1).unwrap();
        let token = w[k % w.len()];
        let mut longer = w.clone();
        longer.insert(k % w.len(), token);
        let (c1, t1) = modified_precision(&[seq(&longer)], &refs, 1).unwrap();
        prop_assert_eq!(t1, t0 + 1);
        prop_assert!(c1 == c0 || c1 == c0 + 1);
        let cap = rw.iter().filter(|t| **t == token).count();
        let have = w.iter().filter(|t| **t == token).count();
        if have >= cap {
            // Already clipped: the extra copy only grows the denominator.
            prop_assert_eq!(c1, c0);
        }
    }

    #[test]
    fn brevity_penalty_stays_in_unit_interval(c in 1usize..50, r in 1usize..50) {
        let bp = brevity_penalty(c, r).unwrap();
        prop_assert!(bp > 0.0 && bp <= 1.0);
        prop_assert_eq!(bp == 1.0, c >= r);
    }
}

#[test]
fn unigram_clipping_example() {
    let cand = tokenize("the the the the the the the");
    let refs = vec![tokenize("the cat is on the mat"), tokenize("there is a cat on the mat")];
    assert_eq!(modified_precision(&[cand], &[refs], 1).unwrap(), (2, 7));
}

#[test]
fn perfect_match_is_exactly_one() {
    let b = bleu4_from_lines(
        &["a cat sits on the mat", "two dogs play in the park"],
        &[vec!["a cat sits on the mat"], vec!["two dogs play in the park"]],
    )
    .unwrap();
    assert_eq!(b.bleu4, 1.0);
    assert_eq!(b.brevity_penalty, 1.0);
}

#[test]
fn missing_higher_order_match_scores_zero() {
    let b = bleu4_from_lines(&["the cat sat"], &[vec!["the cat sat down"]]).unwrap();
    assert_eq!(b.precisions[3].candidate_ngrams, 0);
    assert_eq!(b.bleu4, 0.0);
}

#[test]
fn closest_reference_ties_prefer_shorter() {
    assert_eq!(closest_ref_len(5, &[seq(&["a"; 4]), seq(&["a"; 6])]), 4);
    assert_eq!(closest_ref_len(5, &[seq(&["a"; 6]), seq(&["a"; 5])]), 5);
}

#[test]
fn tokenizer_lowercases_and_splits_punctuation() {
    assert_eq!(tokenize("A Dog, running.").tokens(), ["a", "dog", ",", "running", "."]);
    assert!(tokenize("   ").is_empty());
}

#[test]
fn malformed_corpora_are_rejected() {
    assert_eq!(bleu4(&[], &[]).unwrap_err(), MetricsError::EmptyCorpus);
    assert!(matches!(bleu4(&[seq(&["a"])], &[]), Err(MetricsError::LengthMismatch { .. })));
    assert_eq!(bleu4(&[seq(&["a"])], &[vec![]]).unwrap_err(), MetricsError::NoReferences(0));
    assert_eq!(
        modified_precision(&[seq(&["a"])], &[vec![seq(&["a"])]], 5).unwrap_err(),
        MetricsError::BadOrder(5)
    );
}

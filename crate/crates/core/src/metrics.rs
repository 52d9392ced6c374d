//! Corpus-level BLEU-4 and the caption tokenizer it relies on.
//!
//! Scores are accumulated at corpus level: clipped n-gram matches and
//! candidate n-gram totals are summed over all segments before any ratio is
//! taken, and the effective reference length is the sum of per-segment
//! closest reference lengths. No smoothing is applied, so a corpus with zero
//! matches at any order scores exactly 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest n-gram order used by BLEU-4.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("candidate {0} has no references")]
    NoReferences(usize),
    #[error("mismatched corpus: {candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("n-gram order {0} outside 1..=4")]
    BadOrder(usize),
    #[error("effective reference length must be positive")]
    ZeroReferenceLength,
}

/// A tokenized caption. Tokens are lowercase and never empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn ngrams(&self, n: usize) -> HashMap<&[String], u64> {
        let mut counts = HashMap::new();
        if n == 0 || self.0.len() < n {
            return counts;
        }
        for gram in self.0.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
        counts
    }

    fn ngram_total(&self, n: usize) -> u64 {
        self.0.len().saturating_sub(n - 1) as u64
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }
}

/// Lowercased words split on whitespace. Each non-alphanumeric character
/// becomes a token of its own.
pub fn tokenize(caption: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in caption.chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(ch.to_lowercase().collect());
        }
    }
    flush(&mut word, &mut tokens);
    TokenSeq(tokens)
}

fn flush(word: &mut String, tokens: &mut Vec<String>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
}

/// Clipped n-gram matches and candidate n-gram count, summed over the corpus.
pub fn modified_precision(candidates: &[TokenSeq], references: &[Vec<TokenSeq>], n: usize) -> Result<(u64, u64), MetricsError> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(MetricsError::BadOrder(n));
    }
    check_shape(candidates, references)?;
    let mut clipped = 0;
    let mut total = 0;
    for (cand, refs) in candidates.iter().zip(references) {
        let (c, t) = segment_precision(cand, refs, n);
        clipped += c;
        total += t;
    }
    Ok((clipped, total))
}

fn segment_precision(cand: &TokenSeq, refs: &[TokenSeq], n: usize) -> (u64, u64) {
    let cand_counts = cand.ngrams(n);
    let mut max_ref: HashMap<&[String], u64> = HashMap::new();
    for r in refs {
        for (gram, count) in r.ngrams(n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(count);
        }
    }
    let clipped = cand_counts
        .iter()
        .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, cand.ngram_total(n))
}

fn check_shape(candidates: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<(), MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(MetricsError::NoReferences(i));
    }
    Ok(())
}

/// `exp(1 - r/c)` for candidates no longer than the reference, 1 otherwise.
pub fn brevity_penalty(candidate_len: usize, effective_ref_len: usize) -> Result<f64, MetricsError> {
    if effective_ref_len == 0 {
        return Err(MetricsError::ZeroReferenceLength);
    }
    if candidate_len == 0 {
        return Ok(0.0);
    }
    if candidate_len > effective_ref_len {
        return Ok(1.0);
    }
    Ok((1.0 - effective_ref_len as f64 / candidate_len as f64).exp())
}

/// Length of the reference closest to `candidate_len`; ties go to the shorter one.
pub fn closest_ref_len(candidate_len: usize, refs: &[TokenSeq]) -> usize {
    refs.iter()
        .map(TokenSeq::len)
        .min_by_key(|&len| (len.abs_diff(candidate_len), len))
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderPrecision {
    pub clipped_matches: u64,
    pub candidate_ngrams: u64,
}

impl OrderPrecision {
    pub fn ratio(&self) -> f64 {
        if self.candidate_ngrams == 0 {
            0.0
        } else {
            self.clipped_matches as f64 / self.candidate_ngrams as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    pub precisions: [OrderPrecision; MAX_ORDER],
    pub candidate_len: usize,
    pub effective_ref_len: usize,
    pub brevity_penalty: f64,
    pub bleu4: f64,
}

pub fn bleu4(candidates: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<BleuBreakdown, MetricsError> {
    check_shape(candidates, references)?;

    let mut precisions = [OrderPrecision {
        clipped_matches: 0,
        candidate_ngrams: 0,
    }; MAX_ORDER];
    let mut candidate_len = 0;
    let mut effective_ref_len = 0;
    for (cand, refs) in candidates.iter().zip(references) {
        candidate_len += cand.len();
        effective_ref_len += closest_ref_len(cand.len(), refs);
        for (i, slot) in precisions.iter_mut().enumerate() {
            let (c, t) = segment_precision(cand, refs, i + 1);
            slot.clipped_matches += c;
            slot.candidate_ngrams += t;
        }
    }

    let brevity_penalty = brevity_penalty(candidate_len, effective_ref_len)?;
    let bleu4 = if precisions.iter().any(|p| p.clipped_matches == 0) {
        0.0
    } else {
        let log_mean: f64 = precisions.iter().map(|p| p.ratio().ln()).sum::<f64>() / MAX_ORDER as f64;
        // exp(0) is exactly 1, so a perfect corpus scores exactly 1.0
        (brevity_penalty * log_mean.exp()).clamp(0.0, 1.0)
    };

    Ok(BleuBreakdown {
        precisions,
        candidate_len,
        effective_ref_len,
        brevity_penalty,
        bleu4,
    })
}

/// Tokenizes line-aligned caption files and scores them.
pub fn bleu4_from_lines(hypotheses: &[&str], reference_sets: &[Vec<&str>]) -> Result<BleuBreakdown, MetricsError> {
    let cands: Vec<TokenSeq> = hypotheses.iter().map(|h| tokenize(h)).collect();
    let refs: Vec<Vec<TokenSeq>> = reference_sets.iter().map(|set| set.iter().map(|r| tokenize(r)).collect()).collect();
    bleu4(&cands, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        s.split_whitespace().collect()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(
            tokenize("A man riding a horse.").tokens(),
            ["a", "man", "riding", "a", "horse", "."]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Don't stop").tokens(), ["don", "'", "t", "stop"]);
    }

    #[test]
    fn clipping_of_repeated_word() {
        let cands = vec![seq("the the the the the the the")];
        let refs = vec![vec![seq("the cat is on the mat"), seq("there is a cat on the mat")]];
        assert_eq!(modified_precision(&cands, &refs, 1).unwrap(), (2, 7));
    }

    #[test]
    fn identity_and_disjoint_precision() {
        let c = seq("a dog runs on grass");
        for n in 1..=4 {
            let total = (5 - n + 1) as u64;
            assert_eq!(
                modified_precision(std::slice::from_ref(&c), &[vec![c.clone()]], n).unwrap(),
                (total, total)
            );
        }
        let r = seq("x y z w v");
        assert_eq!(modified_precision(&[c], &[vec![r]], 2).unwrap(), (0, 4));
    }

    #[test]
    fn precision_errors() {
        let c = seq("a b");
        assert!(matches!(
            modified_precision(std::slice::from_ref(&c), &[], 1),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            modified_precision(std::slice::from_ref(&c), &[vec![c.clone()]], 5),
            Err(MetricsError::BadOrder(5))
        );
    }

    #[test]
    fn brevity_penalty_cases() {
        assert_eq!(brevity_penalty(10, 10).unwrap(), 1.0);
        assert!((brevity_penalty(4, 5).unwrap() - 0.778_800_783_071_404_9).abs() < 1e-12);
        assert_eq!(brevity_penalty(12, 5).unwrap(), 1.0);
        assert_eq!(brevity_penalty(0, 5).unwrap(), 0.0);
        assert_eq!(brevity_penalty(3, 0), Err(MetricsError::ZeroReferenceLength));
    }

    #[test]
    fn closest_ref_ties_to_shorter() {
        let refs = vec![seq("a b c d e f"), seq("a b")];
        assert_eq!(closest_ref_len(4, &refs), 2);
    }

    #[test]
    fn short_candidate_breakdown() {
        let b = bleu4(&[seq("a b c d")], &[vec![seq("a b c d e")]]).unwrap();
        let got: Vec<(u64, u64)> = b.precisions.iter().map(|p| (p.clipped_matches, p.candidate_ngrams)).collect();
        assert_eq!(got, [(4, 4), (3, 3), (2, 2), (1, 1)]);
        assert_eq!(b.effective_ref_len, 5);
        assert!((b.bleu4 - 0.778_800_783_071_404_9).abs() < 1e-12);
    }

    #[test]
    fn perfect_match_is_exactly_one() {
        let corpus = vec![seq("a cat sits on a mat"), seq("two dogs play in the park")];
        let refs: Vec<Vec<TokenSeq>> = corpus.iter().map(|c| vec![c.clone()]).collect();
        assert_eq!(bleu4(&corpus, &refs).unwrap().bleu4, 1.0);
    }

    #[test]
    fn no_four_gram_match_scores_zero() {
        let b = bleu4(&[seq("a b c d x")], &[vec![seq("a b c x d")]]).unwrap();
        assert_eq!(b.precisions[3].clipped_matches, 0);
        assert_eq!(b.bleu4, 0.0);
    }

    #[test]
    fn corpus_errors() {
        assert_eq!(bleu4(&[], &[]), Err(MetricsError::EmptyCorpus));
        assert_eq!(bleu4(&[seq("a")], &[vec![]]), Err(MetricsError::NoReferences(0)));
    }
}

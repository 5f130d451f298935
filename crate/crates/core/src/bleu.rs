//! Corpus-level BLEU-4: case-sensitive, pre-tokenized input, no smoothing.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics accumulated over a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches, index `n - 1`.
    pub matches: [usize; MAX_ORDER],
    /// Hypothesis n-gram counts, index `n - 1`.
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn add<T: Eq + Hash>(&mut self, hyp: &[T], reference: &[T]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
            self.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Modified n-gram precision for order `n`.
    pub fn precision(&self, n: usize) -> f64 {
        let t = self.totals[n - 1];
        if t == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp()
    }

    /// Score in `[0, 100]`.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.iter().any(|&m| m == 0) {
            return 0.0;
        }
        let log_mean = (1..=MAX_ORDER).map(|n| self.precision(n).ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * self.brevity_penalty() * log_mean.exp()
    }
}

pub fn corpus_stats<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(h, r);
    }
    Ok(stats)
}

/// BLEU over pre-tokenized sentences.
pub fn corpus_bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    Ok(corpus_stats(hypotheses, references)?.score())
}

/// BLEU over text lines, tokens split on whitespace.
pub fn bleu<S: AsRef<str>>(hypotheses: &[S], references: &[S]) -> Result<f64> {
    let split = |lines: &[S]| -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.as_ref().split_whitespace().map(str::to_string).collect())
            .collect()
    };
    corpus_bleu(&split(hypotheses), &split(references))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_corpus_scores_100() {
        let c = ["the cat sat on the mat", "a b c d e"];
        assert!((bleu(&c, &c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        assert_eq!(bleu(&["", ""], &["a b c d", "e f g h"]).unwrap(), 0.0);
    }

    #[test]
    fn clipping_and_zero_precision() {
        let s = corpus_stats(
            &[vec!["the", "the", "the", "the"]],
            &[vec!["the", "cat", "sat", "down"]],
        )
        .unwrap();
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 4);
        assert_eq!(s.precision(1), 0.25);
        assert_eq!(s.matches[1], 0);
        assert_eq!(s.score(), 0.0);
    }

    #[test]
    fn brevity_penalty_hand_computed() {
        // 4-token hypothesis against an 8-token reference that contains it.
        let hyp = vec![vec!["a", "b", "c", "d"]];
        let reference = vec![vec!["a", "b", "c", "d", "e", "f", "g", "h"]];
        let s = corpus_stats(&hyp, &reference).unwrap();
        assert!((s.brevity_penalty() - (-1.0f64).exp()).abs() < 1e-12);
        assert!((s.score() - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(bleu(&["a"], &["a", "b"]), Err(Error::InvalidInput(_))));
    }
}

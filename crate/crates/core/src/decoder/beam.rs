use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{decoder_step, encode, initial_state, DecoderState, Encoded, Network, Precision};
use crate::model::EOS_ID;
use crate::profile::{scope, Phase};

/// Search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Output length cap as a multiple of the source length.
    pub max_ratio: f64,
    pub precision: Precision,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 5,
            max_ratio: 3.0,
            precision: Precision::Fp32,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if !(self.max_ratio.is_finite() && self.max_ratio > 0.0) {
            return Err(Error::Config(format!("max ratio must be positive, got {}", self.max_ratio)));
        }
        Ok(())
    }

    /// `⌈ratio · l⌉` tokens plus one for EOS.
    pub fn max_len(&self, src_len: usize) -> usize {
        (self.max_ratio * src_len as f64).ceil() as usize + 1
    }
}

/// A partial or complete translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Emitted ids, including the final EOS when finished.
    pub tokens: Vec<u32>,
    /// Sum of per-step log-probabilities.
    pub log_prob: f32,
    pub finished: bool,
}

/// Result of one search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    /// Output ids without the terminating EOS.
    pub tokens: Vec<u32>,
    pub log_prob: f32,
    /// False when the length cap cut the search off before EOS.
    pub finished: bool,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    score: f32,
    parent: usize,
    token: u32,
}

impl Candidate {
    /// Higher score first; then lower token id; then lower parent index.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.token.cmp(&other.token))
            .then(self.parent.cmp(&other.parent))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Max-heap on rank keeps the worst retained candidate on top.
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

/// The `k` best `(parent, token)` extensions of `scores` (row-major, `p × v`).
fn top_k(base: &[f32], scores: &[f32], v: usize, k: usize) -> Vec<Candidate> {
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    let mut floor = f32::NEG_INFINITY;
    for (parent, row) in scores.chunks_exact(v).enumerate() {
        let b = base[parent];
        for (token, &lp) in row.iter().enumerate() {
            let score = b + lp;
            if score < floor {
                continue;
            }
            let c = Candidate {
                score,
                parent,
                token: token as u32,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c.rank(heap.peek().unwrap()) == Ordering::Less {
                heap.pop();
                heap.push(c);
            } else {
                continue;
            }
            if heap.len() == k {
                floor = heap.peek().unwrap().score;
            }
        }
    }
    let mut out = heap.into_vec();
    out.sort_by(|a, b| a.rank(b));
    out
}

/// Per-step log-probabilities averaged over ensemble members.
fn mean_log_probs(mut parts: Vec<Vec<f32>>) -> Vec<f32> {
    if parts.len() == 1 {
        return parts.pop().unwrap();
    }
    let n = parts.len() as f64;
    (0..parts[0].len())
        .map(|i| (parts.iter().map(|p| p[i] as f64).sum::<f64>() / n) as f32)
        .collect()
}

fn check_members(models: &[&Network], cfg: &DecodeConfig) -> Result<()> {
    cfg.validate()?;
    let first = models
        .first()
        .ok_or_else(|| Error::Config("no models given".into()))?;
    for m in models {
        if m.tgt_vocab_size() != first.tgt_vocab_size() {
            return Err(Error::Config(format!(
                "ensemble members disagree on target vocabulary ({} vs {})",
                m.tgt_vocab_size(),
                first.tgt_vocab_size()
            )));
        }
        if m.precision() != cfg.precision {
            return Err(Error::Config(format!(
                "model runs at {} but the configuration asks for {}",
                m.precision(),
                cfg.precision
            )));
        }
    }
    Ok(())
}

/// Beam search over one model or an ensemble.
///
/// Each step extends every live hypothesis by every token and keeps the `beam` best
/// extensions by accumulated log-probability; those ending in EOS are frozen. The
/// search ends when no live hypothesis remains, when no live hypothesis can still
/// beat the best finished one, or at the length cap. The best finished hypothesis
/// wins; if none finished, the best capped one is returned.
pub fn translate(models: &[&Network], src: &[u32], cfg: &DecodeConfig) -> Result<Translation> {
    check_members(models, cfg)?;
    if src.is_empty() {
        return Err(Error::EmptyInput("source sentence"));
    }
    let encoded: Vec<Encoded> = models.iter().map(|m| encode(m, src)).collect::<Result<_>>()?;
    let mut states: Vec<DecoderState> = models.iter().zip(&encoded).map(|(m, e)| initial_state(m, e)).collect();
    let vocab = models[0].tgt_vocab_size();
    let max_len = cfg.max_len(src.len());

    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();

    for step in 0..max_len {
        let prev: Vec<Option<u32>> = live.iter().map(|h| h.tokens.last().copied()).collect();
        let mut parts = Vec::with_capacity(models.len());
        let mut next_states = Vec::with_capacity(models.len());
        for ((m, enc), st) in models.iter().zip(&encoded).zip(&states) {
            let out = decoder_step(m, &prev, st, &enc.states)?;
            parts.push(out.log_probs.into_vec());
            next_states.push(out.state);
        }

        let _g = scope(Phase::SearchOverhead);
        let scores = mean_log_probs(parts);
        let base: Vec<f32> = live.iter().map(|h| h.log_prob).collect();
        let chosen = top_k(&base, &scores, vocab, cfg.beam);
        let last_step = step + 1 == max_len;

        let mut keep_rows = Vec::new();
        let mut next_live = Vec::new();
        for c in chosen {
            let mut tokens = live[c.parent].tokens.clone();
            tokens.push(c.token);
            let done = c.token == EOS_ID;
            let hyp = BeamHypothesis {
                tokens,
                log_prob: c.score,
                finished: done,
            };
            if done {
                finished.push(hyp);
            } else if last_step {
                // Capped: kept only as a fallback result.
                next_live.push(hyp);
            } else {
                keep_rows.push(c.parent);
                next_live.push(hyp);
            }
        }
        live = next_live;
        if last_step {
            break;
        }
        let best_finished = finished.iter().map(|h| h.log_prob).fold(f32::NEG_INFINITY, f32::max);
        // Log-probabilities are non-positive, so live scores only fall from here.
        if live.is_empty() || live.iter().all(|h| h.log_prob < best_finished) {
            live.clear();
            break;
        }
        states = next_states.iter().map(|s| s.select(&keep_rows)).collect();
    }

    let best = |pool: &[BeamHypothesis]| -> Option<BeamHypothesis> {
        pool.iter()
            .min_by(|a, b| b.log_prob.total_cmp(&a.log_prob))
            .cloned()
    };
    let winner = best(&finished)
        .or_else(|| best(&live))
        .ok_or_else(|| Error::Numeric("beam search produced no hypothesis".into()))?;
    let mut tokens = winner.tokens;
    if winner.finished {
        tokens.pop();
    }
    Ok(Translation {
        tokens,
        log_prob: winner.log_prob,
        finished: winner.finished,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_and_breaks_ties_by_token() {
        let base = [0.0, -1.0];
        let scores = [-0.5, -0.5, -3.0, 0.0, -0.1, -9.0];
        let got = top_k(&base, &scores, 3, 3);
        let picked: Vec<(usize, u32)> = got.iter().map(|c| (c.parent, c.token)).collect();
        assert_eq!(picked, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(got[2].score, -1.0);
    }

    #[test]
    fn ensemble_mean_of_identical_members_is_exact() {
        let a = vec![-0.1f32, -2.3, -7.77, -1e-6];
        for n in 1..6 {
            let parts = vec![a.clone(); n];
            assert_eq!(mean_log_probs(parts), a);
        }
    }

    #[test]
    fn config_validation() {
        assert!(DecodeConfig { beam: 0, ..Default::default() }.validate().is_err());
        assert!(DecodeConfig { max_ratio: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(DecodeConfig::default().max_len(4), 13);
        assert_eq!(DecodeConfig { max_ratio: 1.5, ..Default::default() }.max_len(3), 6);
    }
}

//! Beam-search translation, corpus-level drivers and the precision parity report.

mod beam;
mod bpe;

pub use beam::{translate, BeamHypothesis, DecodeConfig, Translation};
pub use bpe::{bpe_merge, CONTINUATION};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bleu;
use crate::error::{Error, Result};
use crate::layers::{Network, Precision};
use crate::model::{quantize_model, ModelParams, Vocab};

/// Translates every sentence, one sentence per worker at a time.
///
/// Results come back in input order; a failure is reported for its own sentence
/// only.
pub fn translate_corpus(
    models: &[&Network],
    sentences: &[Vec<u32>],
    cfg: &DecodeConfig,
    workers: usize,
) -> Vec<Result<Translation>> {
    let workers = workers.clamp(1, sentences.len().max(1));
    if workers == 1 {
        return sentences
            .iter()
            .enumerate()
            .map(|(i, s)| translate(models, s, cfg).map_err(|e| annotate(i, e)))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Translation>>>> = Mutex::new((0..sentences.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= sentences.len() {
                    break;
                }
                let r = translate(models, &sentences[i], cfg).map_err(|e| annotate(i, e));
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every sentence is claimed by a worker"))
        .collect()
}

fn annotate(index: usize, e: Error) -> Error {
    Error::Sentence {
        index,
        source: Box::new(e),
    }
}

/// Output-divergence summary between two decodes of the same corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub baseline: Precision,
    pub candidate: Precision,
    pub sentences: usize,
    pub identical: usize,
    pub identical_fraction: f64,
    /// Token-level Levenshtein distance per sentence.
    pub edit_distances: Vec<usize>,
    /// Corpus BLEU of the candidate outputs scored against the baseline outputs.
    pub bleu: f64,
}

impl ParityReport {
    pub fn from_outputs(baseline: Precision, candidate: Precision, reference: &[Vec<u32>], hypothesis: &[Vec<u32>]) -> Result<Self> {
        if reference.len() != hypothesis.len() {
            return Err(Error::InvalidInput(format!(
                "{} baseline outputs vs {} candidate outputs",
                reference.len(),
                hypothesis.len()
            )));
        }
        let n = reference.len();
        let identical = reference.iter().zip(hypothesis).filter(|(a, b)| a == b).count();
        let edit_distances = reference
            .iter()
            .zip(hypothesis)
            .map(|(a, b)| strsim::generic_levenshtein(a, b))
            .collect();
        Ok(Self {
            baseline,
            candidate,
            sentences: n,
            identical,
            identical_fraction: if n == 0 { 0.0 } else { identical as f64 / n as f64 },
            edit_distances,
            bleu: bleu::corpus_bleu(hypothesis, reference)?,
        })
    }

    pub fn mean_edit_distance(&self) -> f64 {
        if self.edit_distances.is_empty() {
            return 0.0;
        }
        self.edit_distances.iter().sum::<usize>() as f64 / self.edit_distances.len() as f64
    }
}

fn decode_all(net: &Network, sentences: &[Vec<u32>], cfg: &DecodeConfig, workers: usize) -> Result<Vec<Vec<u32>>> {
    let cfg = DecodeConfig {
        precision: net.precision(),
        ..cfg.clone()
    };
    translate_corpus(&[net], sentences, &cfg, workers)
        .into_iter()
        .map(|r| r.map(|t| t.tokens))
        .collect()
}

/// Decodes the corpus with two networks under otherwise identical settings.
pub fn compare_networks(
    baseline: &Network,
    candidate: &Network,
    sentences: &[Vec<u32>],
    cfg: &DecodeConfig,
    workers: usize,
) -> Result<ParityReport> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("parity corpus"));
    }
    let reference = decode_all(baseline, sentences, cfg, workers)?;
    let hypothesis = decode_all(candidate, sentences, cfg, workers)?;
    ParityReport::from_outputs(baseline.precision(), candidate.precision(), &reference, &hypothesis)
}

/// Decodes every sentence under fp32 and int8 and reports how the outputs differ.
pub fn compare_precisions(params: &ModelParams, sentences: &[Vec<u32>], cfg: &DecodeConfig) -> Result<ParityReport> {
    let fp32 = params.network(Precision::Fp32)?;
    let int8 = quantize_model(params)?.network;
    compare_networks(&fp32, &int8, sentences, cfg, 1)
}

/// Detokenized output text: tokens up to EOS, subwords merged.
pub fn render(vocab: &Vocab, tokens: &[u32]) -> String {
    bpe_merge(&vocab.decode(tokens))
}

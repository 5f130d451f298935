//! Model parameters, the on-disk format, the seeded generator and the offline
//! weight quantization pass.

mod format;
mod vocab;

pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use vocab::{Vocab, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{AttentionNet, AttentionQuery, GruCell, InitMode, LinearOp, Network, OutputNet, Precision};
use crate::qmath::{self, FloatMatrix, QuantizationStats};

/// Model sizes. The attention layer is `hidden` wide and the readout layer
/// `embed` wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Dims {
    pub const FULL_EMBED: usize = 620;
    pub const FULL_HIDDEN: usize = 1000;

    pub fn new(src_vocab: usize, tgt_vocab: usize, embed: usize, hidden: usize) -> Self {
        Self {
            src_vocab,
            tgt_vocab,
            embed,
            hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.hidden == 0 {
            return Err(Error::Parameter("embedding and hidden sizes must be at least 1".into()));
        }
        if self.src_vocab < 3 || self.tgt_vocab < 3 {
            return Err(Error::Parameter("vocabularies need at least the three reserved tokens".into()));
        }
        // Total element count must fit comfortably in memory arithmetic.
        let mut total: usize = 0;
        for (_, _, r, c) in tensor_layout(self) {
            total = r
                .checked_mul(c)
                .and_then(|n| total.checked_add(n))
                .filter(|&n| n <= (isize::MAX as usize) / 4)
                .ok_or_else(|| Error::Parameter(format!("model of dims {self:?} is too large")))?;
        }
        Ok(())
    }
}

/// Role of a stored tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    /// Weight of a linear operator; quantized on the int8 path.
    Weight,
    Bias,
}

/// Fused GRU tensors: input-side `3H × in` (update, reset, candidate rows), bias
/// `3H × 1`, state-side gates `2H × H`, state-side candidate `H × H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub input: FloatMatrix,
    pub bias: FloatMatrix,
    pub state_gates: FloatMatrix,
    pub state_candidate: FloatMatrix,
}

impl GruParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input: FloatMatrix::zeros(3 * hidden, input),
            bias: FloatMatrix::zeros(3 * hidden, 1),
            state_gates: FloatMatrix::zeros(2 * hidden, hidden),
            state_candidate: FloatMatrix::zeros(hidden, hidden),
        }
    }

    fn cell(&self, precision: Precision, stats: &mut Option<&mut Vec<QuantizationStats>>, prefix: &str) -> Result<GruCell> {
        GruCell::new(
            linear(precision, &self.input, Some(&self.bias), stats, &format!("{prefix}.input"))?,
            linear(precision, &self.state_gates, None, stats, &format!("{prefix}.state_gates"))?,
            linear(precision, &self.state_candidate, None, stats, &format!("{prefix}.state_candidate"))?,
        )
    }
}

/// All trained tensors of a translation model, in `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub init_mode: InitMode,
    pub attention_query: AttentionQuery,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub src_embed: FloatMatrix,
    pub tgt_embed: FloatMatrix,
    pub enc_forward: GruParams,
    pub enc_backward: GruParams,
    pub dec_first: GruParams,
    pub dec_second: GruParams,
    pub att_encoder: FloatMatrix,
    pub att_bias: FloatMatrix,
    pub att_state: FloatMatrix,
    pub att_score: FloatMatrix,
    pub out_state: FloatMatrix,
    pub out_bias: FloatMatrix,
    pub out_prev: FloatMatrix,
    pub out_context: FloatMatrix,
    pub out_vocab: FloatMatrix,
    pub out_vocab_bias: FloatMatrix,
    pub init_weight: FloatMatrix,
    pub init_bias: FloatMatrix,
}

/// Canonical tensor order: `(name, kind, rows, cols)`.
pub fn tensor_layout(d: &Dims) -> Vec<(String, TensorKind, usize, usize)> {
    use TensorKind::*;
    let (e, h) = (d.embed, d.hidden);
    let mut out = vec![
        ("src_embed".to_string(), Embedding, d.src_vocab, e),
        ("tgt_embed".to_string(), Embedding, d.tgt_vocab, e),
    ];
    for (name, input) in [("enc_forward", e), ("enc_backward", e), ("dec_first", e), ("dec_second", 2 * h)] {
        out.push((format!("{name}.input"), Weight, 3 * h, input));
        out.push((format!("{name}.bias"), Bias, 3 * h, 1));
        out.push((format!("{name}.state_gates"), Weight, 2 * h, h));
        out.push((format!("{name}.state_candidate"), Weight, h, h));
    }
    out.extend([
        ("att_encoder".to_string(), Weight, h, 2 * h),
        ("att_bias".to_string(), Bias, h, 1),
        ("att_state".to_string(), Weight, h, h),
        ("att_score".to_string(), Weight, 1, h),
        ("out_state".to_string(), Weight, e, h),
        ("out_bias".to_string(), Bias, e, 1),
        ("out_prev".to_string(), Weight, e, e),
        ("out_context".to_string(), Weight, e, 2 * h),
        ("out_vocab".to_string(), Weight, d.tgt_vocab, e),
        ("out_vocab_bias".to_string(), Bias, d.tgt_vocab, 1),
        ("init_weight".to_string(), Weight, h, h),
        ("init_bias".to_string(), Bias, h, 1),
    ]);
    out
}

impl ModelParams {
    /// All-zero parameters of the given sizes with synthetic vocabularies.
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let (e, h) = (dims.embed, dims.hidden);
        Ok(Self {
            dims,
            init_mode: InitMode::default(),
            attention_query: AttentionQuery::default(),
            src_vocab: Vocab::synthetic(dims.src_vocab)?,
            tgt_vocab: Vocab::synthetic(dims.tgt_vocab)?,
            src_embed: FloatMatrix::zeros(dims.src_vocab, e),
            tgt_embed: FloatMatrix::zeros(dims.tgt_vocab, e),
            enc_forward: GruParams::zeros(e, h),
            enc_backward: GruParams::zeros(e, h),
            dec_first: GruParams::zeros(e, h),
            dec_second: GruParams::zeros(2 * h, h),
            att_encoder: FloatMatrix::zeros(h, 2 * h),
            att_bias: FloatMatrix::zeros(h, 1),
            att_state: FloatMatrix::zeros(h, h),
            att_score: FloatMatrix::zeros(1, h),
            out_state: FloatMatrix::zeros(e, h),
            out_bias: FloatMatrix::zeros(e, 1),
            out_prev: FloatMatrix::zeros(e, e),
            out_context: FloatMatrix::zeros(e, 2 * h),
            out_vocab: FloatMatrix::zeros(dims.tgt_vocab, e),
            out_vocab_bias: FloatMatrix::zeros(dims.tgt_vocab, 1),
            init_weight: FloatMatrix::zeros(h, h),
            init_bias: FloatMatrix::zeros(h, 1),
        })
    }

    fn tensor_refs(&self) -> Vec<&FloatMatrix> {
        let mut v = vec![&self.src_embed, &self.tgt_embed];
        for g in [&self.enc_forward, &self.enc_backward, &self.dec_first, &self.dec_second] {
            v.extend([&g.input, &g.bias, &g.state_gates, &g.state_candidate]);
        }
        v.extend([
            &self.att_encoder,
            &self.att_bias,
            &self.att_state,
            &self.att_score,
            &self.out_state,
            &self.out_bias,
            &self.out_prev,
            &self.out_context,
            &self.out_vocab,
            &self.out_vocab_bias,
            &self.init_weight,
            &self.init_bias,
        ]);
        v
    }

    fn tensor_muts(&mut self) -> Vec<&mut FloatMatrix> {
        let mut v = vec![&mut self.src_embed, &mut self.tgt_embed];
        for g in [&mut self.enc_forward, &mut self.enc_backward, &mut self.dec_first, &mut self.dec_second] {
            v.extend([&mut g.input, &mut g.bias, &mut g.state_gates, &mut g.state_candidate]);
        }
        v.extend([
            &mut self.att_encoder,
            &mut self.att_bias,
            &mut self.att_state,
            &mut self.att_score,
            &mut self.out_state,
            &mut self.out_bias,
            &mut self.out_prev,
            &mut self.out_context,
            &mut self.out_vocab,
            &mut self.out_vocab_bias,
            &mut self.init_weight,
            &mut self.init_bias,
        ]);
        v
    }

    /// `(name, kind, tensor)` in canonical order.
    pub fn tensors(&self) -> Vec<(String, TensorKind, &FloatMatrix)> {
        tensor_layout(&self.dims)
            .into_iter()
            .zip(self.tensor_refs())
            .map(|((name, kind, _, _), t)| (name, kind, t))
            .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<(String, TensorKind, &mut FloatMatrix)> {
        let layout = tensor_layout(&self.dims);
        layout
            .into_iter()
            .zip(self.tensor_muts())
            .map(|((name, kind, _, _), t)| (name, kind, t))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_refs().iter().map(|t| t.as_slice().len()).sum()
    }

    /// Checks every tensor shape and the vocabulary sizes against `dims`.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.src_vocab.len() != self.dims.src_vocab || self.tgt_vocab.len() != self.dims.tgt_vocab {
            return Err(Error::Schema(format!(
                "vocabulary sizes {}/{} disagree with dims {}/{}",
                self.src_vocab.len(),
                self.tgt_vocab.len(),
                self.dims.src_vocab,
                self.dims.tgt_vocab
            )));
        }
        for ((name, _, r, c), t) in tensor_layout(&self.dims).into_iter().zip(self.tensor_refs()) {
            if t.shape() != (r, c) {
                return Err(Error::Schema(format!(
                    "tensor {name} is {}x{}, expected {r}x{c}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(())
    }

    /// Binds the parameters to one execution path.
    pub fn network(&self, precision: Precision) -> Result<Network> {
        build_network(self, precision, None)
    }
}

/// Every value of the generator's stream maps to `[-0.08, 0.08)`.
pub const INIT_RANGE: f32 = 0.08;

/// Draws one weight from a ChaCha8 stream: the top 24 bits of the next `u32`
/// give `x ∈ [0, 1)` and the weight is `(2x − 1) · 0.08`.
fn draw(rng: &mut ChaCha8Rng) -> f32 {
    let x = (rng.next_u32() >> 8) as f32 * (1.0 / 16_777_216.0);
    (2.0 * x - 1.0) * INIT_RANGE
}

/// A model with i.i.d. uniform weights in `[-0.08, 0.08)`, reproducible from `seed`.
///
/// Values come from `ChaCha8Rng::seed_from_u64(seed)`, filling tensors in canonical
/// order, row-major, one `u32` per element.
pub fn generate_model(src_vocab: usize, tgt_vocab: usize, embed: usize, hidden: usize, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(Dims::new(src_vocab, tgt_vocab, embed, hidden))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, _, t) in params.tensors_mut() {
        for v in t.as_mut_slice() {
            *v = draw(&mut rng);
        }
    }
    Ok(params)
}

/// The int8 execution path of a model plus per-tensor quantization statistics.
#[derive(Clone, Debug)]
pub struct QuantizedModel {
    pub network: Network,
    pub stats: Vec<QuantizationStats>,
}

/// Quantizes every linear-operator weight once; embeddings and biases stay `f32`.
pub fn quantize_model(params: &ModelParams) -> Result<QuantizedModel> {
    let mut stats = Vec::new();
    let network = build_network(params, Precision::Int8, Some(&mut stats))?;
    Ok(QuantizedModel { network, stats })
}

fn linear(
    precision: Precision,
    weight: &FloatMatrix,
    bias: Option<&FloatMatrix>,
    stats: &mut Option<&mut Vec<QuantizationStats>>,
    name: &str,
) -> Result<LinearOp> {
    let bias = bias.map(|b| b.as_slice().to_vec());
    match precision {
        Precision::Fp32 => LinearOp::fp32(weight.clone(), bias),
        Precision::Int8 => {
            let q = qmath::quantize(weight)?;
            if let Some(s) = stats.as_deref_mut() {
                s.push(QuantizationStats::measure(name, weight, &q));
            }
            LinearOp::int8(q, bias)
        }
    }
}

fn build_network(p: &ModelParams, precision: Precision, mut stats: Option<&mut Vec<QuantizationStats>>) -> Result<Network> {
    p.validate()?;
    let s = &mut stats;
    let enc_forward = p.enc_forward.cell(precision, s, "enc_forward")?;
    let enc_backward = p.enc_backward.cell(precision, s, "enc_backward")?;
    let dec_first = p.dec_first.cell(precision, s, "dec_first")?;
    let dec_second = p.dec_second.cell(precision, s, "dec_second")?;
    let attention = AttentionNet::new(
        linear(precision, &p.att_encoder, Some(&p.att_bias), s, "att_encoder")?,
        linear(precision, &p.att_state, None, s, "att_state")?,
        linear(precision, &p.att_score, None, s, "att_score")?,
    )?;
    let output = OutputNet::new(
        linear(precision, &p.out_state, Some(&p.out_bias), s, "out_state")?,
        linear(precision, &p.out_prev, None, s, "out_prev")?,
        linear(precision, &p.out_context, None, s, "out_context")?,
        linear(precision, &p.out_vocab, Some(&p.out_vocab_bias), s, "out_vocab")?,
    )?;
    let init = match p.init_mode {
        InitMode::Learned => Some(linear(precision, &p.init_weight, Some(&p.init_bias), s, "init_weight")?),
        InitMode::Zero => None,
    };
    let net = Network {
        src_embed: p.src_embed.clone(),
        tgt_embed: p.tgt_embed.clone(),
        enc_forward,
        enc_backward,
        dec_first,
        dec_second,
        attention,
        output,
        init,
        query: p.attention_query,
    };
    net.validate()?;
    Ok(net)
}

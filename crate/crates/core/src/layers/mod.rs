//! Neural layers of the attentional encoder-decoder, written once over
//! [`LinearOp`] so the same code runs the `f32` and the int8 path.

mod activations;
mod attention;
mod gru;
mod linear;

pub use activations::{log_softmax, sigmoid, softmax, tanh_f32};
pub use attention::{attend, AttentionNet, EncoderStates};
pub use gru::{gru_step, GruCell};
pub use linear::{LinearOp, Precision};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{scope, Phase};
use crate::qmath::FloatMatrix;
use activations::{log_softmax_in_place, tanh_in_place};

/// How the first decoder state is derived.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `s₀ = tanh(W·h⃖₁ + b)` from the final backward encoder state.
    #[default]
    Learned,
    /// `s₀ = 0`.
    Zero,
}

/// Which intermediate state queries the attention network at step `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionQuery {
    /// `s'ₜ`, the state produced by the first GRU transition of this step.
    #[default]
    Current,
    /// `s'ₜ₋₁`, the intermediate state of the previous step (`s₀` at `t = 1`).
    Previous,
}

/// Deep output: `readout = tanh(W₁·s + W₂·e(y) + W₃·H + b)`, `logits = W₄·readout + b₄`.
#[derive(Clone, Debug)]
pub struct OutputNet {
    state: LinearOp,
    prev_embedding: LinearOp,
    context: LinearOp,
    vocab: LinearOp,
}

impl OutputNet {
    pub fn new(state: LinearOp, prev_embedding: LinearOp, context: LinearOp, vocab: LinearOp) -> Result<Self> {
        let d = state.out_dim();
        if prev_embedding.out_dim() != d || context.out_dim() != d || vocab.in_dim() != d {
            return Err(Error::shape(format!(
                "inconsistent output network: readout widths {}, {}, {} and vocabulary input {}",
                d,
                prev_embedding.out_dim(),
                context.out_dim(),
                vocab.in_dim()
            )));
        }
        Ok(Self {
            state,
            prev_embedding,
            context,
            vocab,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.out_dim()
    }

    pub fn linear_ops(&self) -> [&LinearOp; 4] {
        [&self.state, &self.prev_embedding, &self.context, &self.vocab]
    }

    /// Unnormalized scores, `p × V`.
    pub(crate) fn logits(&self, s: &[f32], emb: &[f32], ctx: &[f32], p: usize) -> FloatMatrix {
        let mut readout = self.state.apply_rows(s, p).into_vec();
        let e = self.prev_embedding.apply_rows(emb, p);
        let c = self.context.apply_rows(ctx, p);
        {
            let _g = scope(Phase::Transcendental);
            for ((r, &x), &y) in readout.iter_mut().zip(e.as_slice()).zip(c.as_slice()) {
                *r += x + y;
            }
            tanh_in_place(&mut readout);
        }
        self.vocab.apply_rows(&readout, p)
    }
}

/// All layers of one translation model, bound to one precision.
#[derive(Clone, Debug)]
pub struct Network {
    pub src_embed: FloatMatrix,
    pub tgt_embed: FloatMatrix,
    pub enc_forward: GruCell,
    pub enc_backward: GruCell,
    pub dec_first: GruCell,
    pub dec_second: GruCell,
    pub attention: AttentionNet,
    pub output: OutputNet,
    /// `None` means zero initial state.
    pub init: Option<LinearOp>,
    pub query: AttentionQuery,
}

impl Network {
    pub fn hidden(&self) -> usize {
        self.dec_first.hidden()
    }

    pub fn src_vocab_size(&self) -> usize {
        self.src_embed.rows()
    }

    pub fn tgt_vocab_size(&self) -> usize {
        self.output.vocab_size()
    }

    pub fn precision(&self) -> Precision {
        self.output.vocab.precision()
    }

    /// Every linear operator, in a fixed order.
    pub fn linear_ops(&self) -> Vec<&LinearOp> {
        let mut ops = Vec::new();
        for cell in [&self.enc_forward, &self.enc_backward, &self.dec_first, &self.dec_second] {
            ops.extend(cell.linear_ops());
        }
        ops.extend(self.attention.linear_ops());
        ops.extend(self.output.linear_ops());
        ops.extend(self.init.iter());
        ops
    }

    /// Cross-checks the dimensions of all layers.
    pub fn validate(&self) -> Result<()> {
        let e = self.src_embed.cols();
        let h = self.enc_forward.hidden();
        let checks = [
            (self.tgt_embed.cols() == e, "target embedding width"),
            (self.enc_forward.input_dim() == e && self.enc_backward.input_dim() == e, "encoder input width"),
            (self.enc_backward.hidden() == h, "encoder directions disagree on hidden size"),
            (self.dec_first.input_dim() == e, "decoder first cell input width"),
            (self.dec_second.input_dim() == 2 * h, "decoder second cell input width"),
            (self.dec_second.hidden() == self.dec_first.hidden(), "decoder hidden sizes"),
            (self.attention.context_dim() == 2 * h, "attention context width"),
            (self.attention.query_dim() == self.dec_first.hidden(), "attention query width"),
            (self.output.state.in_dim() == self.hidden(), "output state width"),
            (self.output.prev_embedding.in_dim() == e, "output embedding width"),
            (self.output.context.in_dim() == 2 * h, "output context width"),
            (self.tgt_embed.rows() == self.tgt_vocab_size(), "target embedding rows vs vocabulary"),
            (
                self.init.as_ref().map_or(true, |op| op.in_dim() == h && op.out_dim() == self.hidden()),
                "initial state transform",
            ),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::Schema(format!("dimension mismatch: {what}")));
            }
        }
        Ok(())
    }
}

/// Encoder output plus the final backward state `h⃖₁` used for initialization.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub states: EncoderStates,
    pub backward_final: Vec<f32>,
}

/// Recurrent decoder state for a batch of hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    /// `sₜ`, `p × H`.
    pub s: FloatMatrix,
    /// Most recent intermediate state `s'ₜ`, `p × H`.
    pub intermediate: FloatMatrix,
}

impl DecoderState {
    pub fn batch(&self) -> usize {
        self.s.rows()
    }

    /// Rows `idx` of this state, in order.
    pub fn select(&self, idx: &[usize]) -> DecoderState {
        let pick = |m: &FloatMatrix| {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            FloatMatrix::from_vec(idx.len(), m.cols(), data)
        };
        DecoderState {
            s: pick(&self.s),
            intermediate: pick(&self.intermediate),
        }
    }
}

/// Output of one decoder transition for `p` hypotheses.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `p × V` log-probabilities.
    pub log_probs: FloatMatrix,
    pub state: DecoderState,
    /// `p × l` attention weights.
    pub alpha: FloatMatrix,
}

fn embed_rows(table: &FloatMatrix, ids: impl Iterator<Item = Option<u32>>) -> Result<Vec<f32>> {
    let _g = scope(Phase::Embedding);
    let mut out = Vec::new();
    for id in ids {
        match id {
            Some(id) if (id as usize) < table.rows() => out.extend_from_slice(table.row(id as usize)),
            Some(id) => {
                return Err(Error::Vocab {
                    id,
                    size: table.rows(),
                })
            }
            None => out.extend(std::iter::repeat(0.0).take(table.cols())),
        }
    }
    Ok(out)
}

/// Bidirectional encoder. Both directions start from zero state.
pub fn encode(net: &Network, src: &[u32]) -> Result<Encoded> {
    if src.is_empty() {
        return Err(Error::EmptyInput("source sentence"));
    }
    let l = src.len();
    let x = embed_rows(&net.src_embed, src.iter().map(|&t| Some(t)))?;
    let h = net.enc_forward.hidden();

    let run = |cell: &GruCell, order: &mut dyn Iterator<Item = usize>| -> Vec<f32> {
        let gx = cell.project_input(&x, l);
        let mut states = vec![0f32; l * h];
        let mut prev = vec![0f32; h];
        for i in order {
            let next = cell.step_projected(gx.row(i), &prev, 1).into_vec();
            states[i * h..(i + 1) * h].copy_from_slice(&next);
            prev = next;
        }
        states
    };
    let fwd = run(&net.enc_forward, &mut (0..l));
    let bwd = run(&net.enc_backward, &mut (0..l).rev());

    let mut states = Vec::with_capacity(l * 2 * h);
    for i in 0..l {
        states.extend_from_slice(&bwd[i * h..(i + 1) * h]);
        states.extend_from_slice(&fwd[i * h..(i + 1) * h]);
    }
    let states = FloatMatrix::from_vec(l, 2 * h, states);
    let projected = net.attention.project_encoder(&states);
    Ok(Encoded {
        states: EncoderStates { states, projected },
        backward_final: bwd[..h].to_vec(),
    })
}

/// The single-hypothesis start state.
pub fn initial_state(net: &Network, enc: &Encoded) -> DecoderState {
    let hd = net.hidden();
    let s = match &net.init {
        Some(op) => {
            let mut s = op.apply_rows(&enc.backward_final, 1).into_vec();
            let _g = scope(Phase::Transcendental);
            tanh_in_place(&mut s);
            s
        }
        None => vec![0.0; hd],
    };
    let s = FloatMatrix::from_vec(1, hd, s);
    DecoderState {
        intermediate: s.clone(),
        s,
    }
}

/// One conditional-GRU step for `p` hypotheses.
///
/// `prev` holds the previously emitted token of each hypothesis; `None` marks the
/// first step and embeds as a zero vector.
pub fn decoder_step(net: &Network, prev: &[Option<u32>], state: &DecoderState, enc: &EncoderStates) -> Result<StepOutput> {
    let p = prev.len();
    let hd = net.hidden();
    if state.batch() != p || state.s.cols() != hd || state.intermediate.cols() != hd {
        return Err(Error::shape(format!(
            "decoder state is {}x{} for {p} hypotheses of width {hd}",
            state.s.rows(),
            state.s.cols()
        )));
    }
    if enc.is_empty() {
        return Err(Error::EmptyInput("encoder states"));
    }
    let emb = embed_rows(&net.tgt_embed, prev.iter().copied())?;
    let s_int = net.dec_first.step_rows(&emb, state.s.as_slice(), p);
    let query = match net.query {
        AttentionQuery::Current => &s_int,
        AttentionQuery::Previous => &state.intermediate,
    };
    let (ctx, alpha) = attention::attend_rows(&net.attention, query.as_slice(), p, enc);
    let s = net.dec_second.step_rows(ctx.as_slice(), s_int.as_slice(), p);
    let mut logits = net.output.logits(s.as_slice(), &emb, ctx.as_slice(), p).into_vec();
    {
        let _g = scope(Phase::Transcendental);
        for row in logits.chunks_exact_mut(net.tgt_vocab_size()) {
            log_softmax_in_place(row);
        }
    }
    Ok(StepOutput {
        log_probs: FloatMatrix::from_vec(p, net.tgt_vocab_size(), logits),
        state: DecoderState { s, intermediate: s_int },
        alpha,
    })
}

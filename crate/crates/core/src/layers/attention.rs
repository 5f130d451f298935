use super::activations::{softmax_in_place, tanh_scalar};
use super::linear::LinearOp;
use crate::error::{Error, Result};
use crate::profile::{scope, Phase};
use crate::qmath::FloatMatrix;

/// Two-layer scoring network: `score_i = v · tanh(W·h_i + U·s)`.
#[derive(Clone, Debug)]
pub struct AttentionNet {
    encoder_proj: LinearOp,
    state_proj: LinearOp,
    score: LinearOp,
}

impl AttentionNet {
    pub fn new(encoder_proj: LinearOp, state_proj: LinearOp, score: LinearOp) -> Result<Self> {
        let a = encoder_proj.out_dim();
        if state_proj.out_dim() != a || score.in_dim() != a || score.out_dim() != 1 || encoder_proj.in_dim() % 2 != 0 {
            return Err(Error::shape(format!(
                "inconsistent attention operators: W {}x{}, U {}x{}, v {}x{}",
                encoder_proj.out_dim(),
                encoder_proj.in_dim(),
                state_proj.out_dim(),
                state_proj.in_dim(),
                score.out_dim(),
                score.in_dim()
            )));
        }
        Ok(Self {
            encoder_proj,
            state_proj,
            score,
        })
    }

    pub fn linear_ops(&self) -> [&LinearOp; 3] {
        [&self.encoder_proj, &self.state_proj, &self.score]
    }

    pub fn context_dim(&self) -> usize {
        self.encoder_proj.in_dim()
    }

    pub fn query_dim(&self) -> usize {
        self.state_proj.in_dim()
    }

    pub(crate) fn project_encoder(&self, states: &FloatMatrix) -> FloatMatrix {
        self.encoder_proj.apply_rows(states.as_slice(), states.rows())
    }
}

/// Encoder output: one `2H` row per source position (`[backward; forward]`) and the
/// attention projection of each row, reused at every decoder step.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub states: FloatMatrix,
    pub projected: FloatMatrix,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn width(&self) -> usize {
        self.states.cols()
    }
}

/// Attention for a batch of queries (`p × H`). Returns the contexts (`p × 2H`) and
/// the normalized weights (`p × l`).
pub fn attend(att: &AttentionNet, query: &FloatMatrix, enc: &EncoderStates) -> Result<(FloatMatrix, FloatMatrix)> {
    if query.cols() != att.query_dim() || enc.width() != att.context_dim() || enc.projected.cols() != att.encoder_proj.out_dim() {
        return Err(Error::shape(format!(
            "attend: query width {} (want {}), encoder width {} (want {})",
            query.cols(),
            att.query_dim(),
            enc.width(),
            att.context_dim()
        )));
    }
    if enc.is_empty() {
        return Err(Error::EmptyInput("encoder states"));
    }
    Ok(attend_rows(att, query.as_slice(), query.rows(), enc))
}

pub(crate) fn attend_rows(att: &AttentionNet, query: &[f32], p: usize, enc: &EncoderStates) -> (FloatMatrix, FloatMatrix) {
    let l = enc.len();
    let a = att.encoder_proj.out_dim();
    let u = att.state_proj.apply_rows(query, p);

    let mut hidden = vec![0f32; p * l * a];
    {
        let _g = scope(Phase::Transcendental);
        for j in 0..p {
            let uj = u.row(j);
            for i in 0..l {
                let wi = enc.projected.row(i);
                let dst = &mut hidden[(j * l + i) * a..(j * l + i + 1) * a];
                for ((d, &w), &u) in dst.iter_mut().zip(wi).zip(uj) {
                    *d = tanh_scalar(w + u);
                }
            }
        }
    }
    let scores = att.score.apply_rows(&hidden, p * l);
    let mut alpha = scores.into_vec();
    {
        let _g = scope(Phase::Transcendental);
        for row in alpha.chunks_exact_mut(l) {
            softmax_in_place(row);
        }
    }

    let _g = scope(Phase::Other);
    let w = enc.width();
    let mut ctx = vec![0f32; p * w];
    for j in 0..p {
        let cj = &mut ctx[j * w..(j + 1) * w];
        for i in 0..l {
            let weight = alpha[j * l + i];
            for (c, &h) in cj.iter_mut().zip(enc.states.row(i)) {
                *c += weight * h;
            }
        }
    }
    (FloatMatrix::from_vec(p, w, ctx), FloatMatrix::from_vec(p, l, alpha))
}

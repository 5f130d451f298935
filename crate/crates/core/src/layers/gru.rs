use super::activations::{sigmoid_scalar, tanh_scalar};
use super::linear::LinearOp;
use crate::error::{Error, Result};
use crate::profile::{scope, Phase};
use crate::qmath::FloatMatrix;

/// Gated recurrent unit with reset/update gates.
///
/// Input-side weights for the update gate, reset gate and candidate are fused into
/// one `3H × in` operator (rows in that order, carrying all three biases). The
/// state side is split into the two gates (`2H × H`) and the candidate (`H × H`),
/// because the candidate consumes the reset-gated state.
#[derive(Clone, Debug)]
pub struct GruCell {
    input: LinearOp,
    state_gates: LinearOp,
    state_candidate: LinearOp,
    hidden: usize,
}

impl GruCell {
    pub fn new(input: LinearOp, state_gates: LinearOp, state_candidate: LinearOp) -> Result<Self> {
        let hidden = state_candidate.out_dim();
        let ok = input.out_dim() == 3 * hidden
            && state_gates.out_dim() == 2 * hidden
            && state_gates.in_dim() == hidden
            && state_candidate.in_dim() == hidden;
        if !ok {
            return Err(Error::shape(format!(
                "inconsistent GRU operators: input {}x{}, gates {}x{}, candidate {}x{}",
                input.out_dim(),
                input.in_dim(),
                state_gates.out_dim(),
                state_gates.in_dim(),
                state_candidate.out_dim(),
                state_candidate.in_dim()
            )));
        }
        Ok(Self {
            input,
            state_gates,
            state_candidate,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input.in_dim()
    }

    pub fn input_op(&self) -> &LinearOp {
        &self.input
    }

    pub fn linear_ops(&self) -> [&LinearOp; 3] {
        [&self.input, &self.state_gates, &self.state_candidate]
    }

    /// Input projections for a batch of inputs, `p × 3H`. Lets a caller project a
    /// whole sequence with one matrix product before running the recurrence.
    pub(crate) fn project_input(&self, x: &[f32], p: usize) -> FloatMatrix {
        self.input.apply_rows(x, p)
    }

    /// One transition given precomputed input projections `gx` (`p × 3H`).
    pub(crate) fn step_projected(&self, gx: &[f32], h: &[f32], p: usize) -> FloatMatrix {
        let hd = self.hidden;
        let gh = self.state_gates.apply_rows(h, p);
        let mut z = vec![0f32; p * hd];
        let mut rh = vec![0f32; p * hd];
        {
            let _g = scope(Phase::Transcendental);
            for j in 0..p {
                let gxj = &gx[j * 3 * hd..(j + 1) * 3 * hd];
                let ghj = gh.row(j);
                let hj = &h[j * hd..(j + 1) * hd];
                let zj = &mut z[j * hd..(j + 1) * hd];
                for ((o, &a), &b) in zj.iter_mut().zip(&gxj[..hd]).zip(&ghj[..hd]) {
                    *o = sigmoid_scalar(a + b);
                }
                let rhj = &mut rh[j * hd..(j + 1) * hd];
                for (((o, &a), &b), &hv) in rhj.iter_mut().zip(&gxj[hd..2 * hd]).zip(&ghj[hd..]).zip(hj) {
                    *o = sigmoid_scalar(a + b) * hv;
                }
            }
        }
        let uc = self.state_candidate.apply_rows(&rh, p);
        let _g = scope(Phase::Transcendental);
        let mut out = vec![0f32; p * hd];
        for j in 0..p {
            let gxj = &gx[j * 3 * hd + 2 * hd..(j + 1) * 3 * hd];
            let ucj = uc.row(j);
            let hj = &h[j * hd..(j + 1) * hd];
            let zj = &z[j * hd..(j + 1) * hd];
            let oj = &mut out[j * hd..(j + 1) * hd];
            for ((((o, &a), &b), &hv), &zv) in oj.iter_mut().zip(gxj).zip(ucj).zip(hj).zip(zj) {
                let cand = tanh_scalar(a + b);
                *o = (1.0 - zv) * hv + zv * cand;
            }
        }
        FloatMatrix::from_vec(p, hd, out)
    }

    pub(crate) fn step_rows(&self, x: &[f32], h: &[f32], p: usize) -> FloatMatrix {
        let gx = self.project_input(x, p);
        self.step_projected(gx.as_slice(), h, p)
    }
}

/// `h' = (1 − z) ⊙ h + z ⊙ tanh(W·x + U·(r ⊙ h) + b)` for every row of `x` / `h`.
pub fn gru_step(cell: &GruCell, x: &FloatMatrix, h_prev: &FloatMatrix) -> Result<FloatMatrix> {
    if x.cols() != cell.input_dim() || h_prev.cols() != cell.hidden() || x.rows() != h_prev.rows() {
        return Err(Error::shape(format!(
            "gru_step: cell takes {}-wide inputs and {}-wide states, got x {}x{} and h {}x{}",
            cell.input_dim(),
            cell.hidden(),
            x.rows(),
            x.cols(),
            h_prev.rows(),
            h_prev.cols()
        )));
    }
    Ok(cell.step_rows(x.as_slice(), h_prev.as_slice(), x.rows()))
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{scope, Phase};
use crate::qmath::{self, kernels, FloatMatrix, QuantizedMatrix};

/// Arithmetic used by the matrix products of a decode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Int8,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Int8 => "int8",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(Precision::Fp32),
            "int8" => Ok(Precision::Int8),
            other => Err(Error::Config(format!("unknown precision {other:?} (expected fp32 or int8)"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
enum Weight {
    Fp32(FloatMatrix),
    Int8 { q: QuantizedMatrix, row_sums: Vec<i32> },
}

/// Affine map `y = W·x + b` on one of the two execution paths.
///
/// Inputs and outputs are batch-major: a `p × in` matrix holds `p` input vectors,
/// one per row, and produces a `p × out` matrix. On the int8 path the whole batch is
/// quantized with a single scale per call. Biases stay `f32`.
#[derive(Clone, Debug)]
pub struct LinearOp {
    weight: Weight,
    bias: Option<Vec<f32>>,
}

impl LinearOp {
    pub fn fp32(weight: FloatMatrix, bias: Option<Vec<f32>>) -> Result<Self> {
        check_bias(weight.rows(), bias.as_deref())?;
        Ok(Self {
            weight: Weight::Fp32(weight),
            bias,
        })
    }

    pub fn int8(weight: QuantizedMatrix, bias: Option<Vec<f32>>) -> Result<Self> {
        check_bias(weight.rows(), bias.as_deref())?;
        let row_sums = kernels::row_sums(weight.as_slice(), weight.rows(), weight.cols());
        Ok(Self {
            weight: Weight::Int8 { q: weight, row_sums },
            bias,
        })
    }

    /// Builds the operator for `precision`, quantizing `weight` when needed.
    pub fn new(precision: Precision, weight: &FloatMatrix, bias: Option<Vec<f32>>) -> Result<Self> {
        match precision {
            Precision::Fp32 => Self::fp32(weight.clone(), bias),
            Precision::Int8 => Self::int8(qmath::quantize(weight)?, bias),
        }
    }

    pub fn precision(&self) -> Precision {
        match self.weight {
            Weight::Fp32(_) => Precision::Fp32,
            Weight::Int8 { .. } => Precision::Int8,
        }
    }

    pub fn in_dim(&self) -> usize {
        match &self.weight {
            Weight::Fp32(w) => w.cols(),
            Weight::Int8 { q, .. } => q.cols(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.weight {
            Weight::Fp32(w) => w.rows(),
            Weight::Int8 { q, .. } => q.rows(),
        }
    }

    pub fn quantized(&self) -> Option<&QuantizedMatrix> {
        match &self.weight {
            Weight::Int8 { q, .. } => Some(q),
            Weight::Fp32(_) => None,
        }
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    /// Applies the map to every row of `x`.
    pub fn apply(&self, x: &FloatMatrix) -> Result<FloatMatrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "linear op expects inputs of width {}, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        Ok(self.apply_rows(x.as_slice(), x.rows()))
    }

    /// `xs` holds `p` contiguous input rows; returns `p × out`.
    pub(crate) fn apply_rows(&self, xs: &[f32], p: usize) -> FloatMatrix {
        let (m, k) = (self.out_dim(), self.in_dim());
        debug_assert_eq!(xs.len(), p * k);
        let isa = qmath::detected_isa();
        let mut out = vec![0f32; m * p];
        match &self.weight {
            Weight::Fp32(w) => {
                let _g = scope(Phase::Matmul);
                kernels::f32_panel(isa, w.as_slice(), m, k, xs, p, &mut out);
            }
            Weight::Int8 { q, row_sums } => {
                let (xq, xscale) = {
                    let _g = scope(Phase::QuantizeActivations);
                    let scale = qmath::scale_for(qmath::max_abs(xs));
                    let mut xq = vec![0i8; xs.len()];
                    qmath::quantize_slice_into(xs, scale, &mut xq);
                    (xq, scale)
                };
                let _g = scope(Phase::Matmul);
                let mut acc = vec![0i64; m * p];
                kernels::i8_panel(isa, q.as_slice(), m, k, Some(row_sums), &xq, p, &mut acc);
                let denom = q.scale() * xscale;
                for (o, &s) in out.iter_mut().zip(&acc) {
                    *o = qmath::dequantize_sum(s, denom);
                }
            }
        }
        if let Some(b) = &self.bias {
            for row in out.chunks_exact_mut(m) {
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
        FloatMatrix::from_vec(p, m, out)
    }
}

fn check_bias(rows: usize, bias: Option<&[f32]>) -> Result<()> {
    match bias {
        Some(b) if b.len() != rows => Err(Error::shape(format!(
            "bias of length {} for an operator with {rows} outputs",
            b.len()
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int8_apply_matches_qgemm_plus_bias() {
        let w = FloatMatrix::from_fn(7, 5, |r, c| ((r * 5 + c) as f32 * 0.77).sin() * 0.1);
        let bias: Vec<f32> = (0..7).map(|i| i as f32 * 0.01).collect();
        let op = LinearOp::new(Precision::Int8, &w, Some(bias.clone())).unwrap();
        let x = FloatMatrix::from_fn(3, 5, |r, c| ((r * 5 + c) as f32).cos());
        let y = op.apply(&x).unwrap();

        let wq = qmath::quantize(&w).unwrap();
        let xq = qmath::quantize(&x.transpose()).unwrap();
        let reference = qmath::qgemm(&wq, &xq).unwrap();
        for j in 0..3 {
            for i in 0..7 {
                assert_eq!(y.get(j, i), reference.get(i, j) + bias[i]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_bias_and_input() {
        let w = FloatMatrix::zeros(3, 2);
        assert!(LinearOp::fp32(w.clone(), Some(vec![0.0; 2])).is_err());
        let op = LinearOp::fp32(w, None).unwrap();
        assert!(matches!(op.apply(&FloatMatrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn precision_parses() {
        assert_eq!("int8".parse::<Precision>().unwrap(), Precision::Int8);
        assert_eq!("fp32".parse::<Precision>().unwrap(), Precision::Fp32);
        assert!("fp16".parse::<Precision>().is_err());
    }
}

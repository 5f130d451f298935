use serde::{Deserialize, Serialize};

use super::matrix::{max_abs, FloatMatrix, QuantizedMatrix};
use crate::error::{Error, Result};

/// Largest magnitude representable after quantization.
pub const QMAX: f32 = 127.0;

/// Scale mapping `[-max_abs, max_abs]` onto `[-127, 127]`; `1.0` for an all-zero tensor.
pub fn scale_for(max_abs: f32) -> f32 {
    if max_abs > 0.0 {
        QMAX / max_abs
    } else {
        1.0
    }
}

/// Rounds `x * scale` to the nearest integer, ties away from zero, clamped to ±127.
///
/// The product of two `f32` values is exact in `f64`, and adding ±0.5 to it is exact
/// for every magnitude where the sum can reach the next integer, so truncating the
/// sum rounds the exact product.
#[inline(always)]
pub fn quantize_value(x: f32, scale: f32) -> i8 {
    let y = x as f64 * scale as f64;
    let r = (y + 0.5f64.copysign(y)) as i32;
    r.clamp(-127, 127) as i8
}

pub(crate) fn quantize_slice_into(xs: &[f32], scale: f32, out: &mut [i8]) {
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = quantize_value(x, scale);
    }
}

/// Symmetric per-tensor quantization with `scale = 127 / max|m|`.
pub fn quantize(m: &FloatMatrix) -> Result<QuantizedMatrix> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("cannot quantize non-finite values".into()));
    }
    Ok(quantize_unchecked(m.rows(), m.cols(), m.as_slice()))
}

/// Quantizes a finite slice viewed as a `rows × cols` matrix.
fn quantize_unchecked(rows: usize, cols: usize, xs: &[f32]) -> QuantizedMatrix {
    let scale = scale_for(max_abs(xs));
    let mut data = vec![0i8; xs.len()];
    quantize_slice_into(xs, scale, &mut data);
    QuantizedMatrix::from_parts(rows, cols, data, scale)
}

/// Maps every element back to `q / scale`.
pub fn dequantize(q: &QuantizedMatrix) -> FloatMatrix {
    let scale = q.scale();
    FloatMatrix::from_vec(
        q.rows(),
        q.cols(),
        q.as_slice().iter().map(|&v| v as f32 / scale).collect(),
    )
}

/// Round-trip error summary for one quantized tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationStats {
    pub name: String,
    pub scale: f32,
    pub max_abs: f32,
    pub rms_error: f64,
    pub max_error: f64,
}

impl QuantizationStats {
    pub fn measure(name: impl Into<String>, original: &FloatMatrix, q: &QuantizedMatrix) -> Self {
        let scale = q.scale();
        let (mut sq, mut worst) = (0.0f64, 0.0f64);
        for (&x, &v) in original.as_slice().iter().zip(q.as_slice()) {
            let err = (x as f64 - v as f64 / scale as f64).abs();
            sq += err * err;
            worst = worst.max(err);
        }
        let n = original.as_slice().len().max(1) as f64;
        Self {
            name: name.into(),
            scale,
            max_abs: original.max_abs(),
            rms_error: (sq / n).sqrt(),
            max_error: worst,
        }
    }

    /// Half a quantization step, the worst-case rounding error.
    pub fn error_bound(&self) -> f64 {
        0.5 / self.scale as f64
    }

    pub fn within_bound(&self) -> bool {
        self.max_error <= self.error_bound() * (1.0 + 1e-9)
    }
}

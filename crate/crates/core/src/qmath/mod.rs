//! Quantization and matrix-multiply kernels.
//!
//! `qgemm` is the reference naive integer product; `qgemm_panel` is the 4-row,
//! SIMD-dispatched schedule that the decoder uses. Both return `f32` results:
//! the exact integer dot product divided by the product of the operand scales.

pub mod kernels;
mod matrix;
mod quant;

pub use kernels::{available_isas, detected_isa, Isa, MAX_I32_DEPTH};
pub use matrix::{FloatMatrix, QuantizedMatrix};
pub use quant::{dequantize, quantize, quantize_value, scale_for, QuantizationStats, QMAX};

pub(crate) use matrix::max_abs;
pub(crate) use quant::quantize_slice_into;

use crate::error::{Error, Result};

fn check_inner(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a.1 != b.0 {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    if b.1 == 0 {
        return Err(Error::shape("right operand has no columns"));
    }
    Ok(())
}

/// Converts an exact integer dot product back to real units.
#[inline]
pub fn dequantize_sum(sum: i64, denom: f32) -> f32 {
    sum as f32 / denom
}

/// Naive integer product: one dot product per output entry, no blocking or copy.
pub fn qgemm(a: &QuantizedMatrix, b: &QuantizedMatrix) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let denom = a.scale() * b.scale();
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let mut out = Vec::with_capacity(m * p);
    for i in 0..m {
        let row = &ad[i * k..(i + 1) * k];
        for j in 0..p {
            let sum = if k <= MAX_I32_DEPTH {
                let mut s = 0i32;
                for (t, &x) in row.iter().enumerate() {
                    s += x as i32 * bd[t * p + j] as i32;
                }
                s as i64
            } else {
                row.iter().enumerate().map(|(t, &x)| x as i64 * bd[t * p + j] as i64).sum()
            };
            out.push(dequantize_sum(sum, denom));
        }
    }
    Ok(FloatMatrix::from_vec(m, p, out))
}

/// Widest panel handled in one kernel pass when `p_small` is false.
const PANEL_BLOCK: usize = 8;

/// Panel-scheduled integer product, bit-identical to [`qgemm`].
///
/// `p_small` is a schedule hint only: when it is false, wide right-hand operands are
/// processed in blocks of eight columns.
pub fn qgemm_panel(a: &QuantizedMatrix, b: &QuantizedMatrix, p_small: bool) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    let block = if p_small { b.cols() } else { PANEL_BLOCK };
    panel_product(detected_isa(), a, b, block)
}

/// [`qgemm_panel`] pinned to one instruction-set path.
pub fn qgemm_panel_with(isa: Isa, a: &QuantizedMatrix, b: &QuantizedMatrix) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    if !isa.is_supported() {
        return Err(Error::InvalidInput(format!("{} not supported on this CPU", isa.name())));
    }
    panel_product(isa, a, b, b.cols())
}

fn panel_product(isa: Isa, a: &QuantizedMatrix, b: &QuantizedMatrix, block: usize) -> Result<FloatMatrix> {
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let bt = b.transpose();
    let denom = a.scale() * b.scale();
    let sums = kernels::row_sums(a.as_slice(), m, k);
    let mut out = vec![0f32; m * p];
    let mut acc = Vec::new();
    for j0 in (0..p).step_by(block.max(1)) {
        let w = block.min(p - j0);
        acc.clear();
        acc.resize(m * w, 0i64);
        kernels::i8_panel(isa, a.as_slice(), m, k, Some(&sums), &bt.as_slice()[j0 * k..(j0 + w) * k], w, &mut acc);
        for jj in 0..w {
            for i in 0..m {
                out[i * p + j0 + jj] = dequantize_sum(acc[jj * m + i], denom);
            }
        }
    }
    Ok(FloatMatrix::from_vec(m, p, out))
}

/// `f32` product for narrow right-hand operands: vectorized dot products, four
/// weight rows per pass.
pub fn gemm_f32(a: &FloatMatrix, b: &FloatMatrix) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    gemm_f32_with(detected_isa(), a, b)
}

pub fn gemm_f32_with(isa: Isa, a: &FloatMatrix, b: &FloatMatrix) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let bt = b.transpose();
    let mut tmp = vec![0f32; m * p];
    kernels::f32_panel(isa, a.as_slice(), m, k, bt.as_slice(), p, &mut tmp);
    Ok(FloatMatrix::from_vec(p, m, tmp).transpose())
}

const BLOCK_M: usize = 64;
const BLOCK_K: usize = 256;

/// Cache-blocked `f32` product. The inner loop runs along the output row, so it
/// pays off for wide right-hand operands and loses to [`gemm_f32`] for narrow ones.
pub fn gemm_f32_blocked(a: &FloatMatrix, b: &FloatMatrix) -> Result<FloatMatrix> {
    check_inner(a.shape(), b.shape())?;
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let (ad, bd) = (a.as_slice(), b.as_slice());
    let mut c = vec![0f32; m * p];
    for k0 in (0..k).step_by(BLOCK_K) {
        let k1 = (k0 + BLOCK_K).min(k);
        for i0 in (0..m).step_by(BLOCK_M) {
            let i1 = (i0 + BLOCK_M).min(m);
            for i in i0..i1 {
                let c_row = &mut c[i * p..(i + 1) * p];
                for t in k0..k1 {
                    let av = ad[i * k + t];
                    let b_row = &bd[t * p..(t + 1) * p];
                    for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                        *cv += av * bv;
                    }
                }
            }
        }
    }
    Ok(FloatMatrix::from_vec(m, p, c))
}

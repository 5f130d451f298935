//! Element-wise nonlinearities, kept in `f32` on both execution paths.
//!
//! `tanh` uses a clamped 13/6 rational approximation and `exp` a Cephes-style
//! range reduction with a degree-5 polynomial; both loops vectorize and stay within
//! a few ulp of the exact functions.

use crate::error::{Error, Result};

const TANH_CLAMP: f32 = 7.905_311;
const TANH_LINEAR: f32 = 0.0004;

#[inline(always)]
pub(crate) fn tanh_scalar(x: f32) -> f32 {
    const A1: f32 = 4.893_524_6e-3;
    const A3: f32 = 6.372_619_3e-4;
    const A5: f32 = 1.485_722_4e-5;
    const A7: f32 = 5.122_297e-8;
    const A9: f32 = -8.604_672e-11;
    const A11: f32 = 2.000_188e-13;
    const A13: f32 = -2.760_768_5e-16;
    const B0: f32 = 4.893_525e-3;
    const B2: f32 = 2.268_434_6e-3;
    const B4: f32 = 1.185_347e-4;
    const B6: f32 = 1.198_258_4e-6;

    let c = x.clamp(-TANH_CLAMP, TANH_CLAMP);
    let x2 = c * c;
    let mut p = A13;
    p = p * x2 + A11;
    p = p * x2 + A9;
    p = p * x2 + A7;
    p = p * x2 + A5;
    p = p * x2 + A3;
    p = p * x2 + A1;
    let p = p * c;
    let mut q = B6;
    q = q * x2 + B4;
    q = q * x2 + B2;
    q = q * x2 + B0;
    if c.abs() < TANH_LINEAR {
        c
    } else {
        p / q
    }
}

#[inline(always)]
pub(crate) fn exp_scalar(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    const ROUND: f32 = 12_582_912.0; // 1.5 · 2²³
    const HI: f32 = 88.376_26;
    const LO: f32 = -87.336_55;

    let c = x.clamp(LO, HI);
    let n = (c * LOG2E + ROUND) - ROUND;
    let r = c - n * LN2_HI - n * LN2_LO;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let e = p * r * r + r + 1.0;
    let scale = f32::from_bits(((n as i32 + 127) as u32) << 23);
    let y = e * scale;
    if x > HI {
        f32::INFINITY
    } else if x < LO {
        0.0
    } else {
        y
    }
}

#[inline(always)]
pub(crate) fn sigmoid_scalar(x: f32) -> f32 {
    1.0 / (1.0 + exp_scalar(-x))
}

pub(crate) fn tanh_in_place(xs: &mut [f32]) {
    for x in xs {
        *x = tanh_scalar(*x);
    }
}

pub(crate) fn sigmoid_in_place(xs: &mut [f32]) {
    for x in xs {
        *x = sigmoid_scalar(*x);
    }
}

pub(crate) fn softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0f32;
    for x in xs.iter_mut() {
        *x = exp_scalar(*x - max);
        sum += *x;
    }
    let inv = 1.0 / sum;
    for x in xs.iter_mut() {
        *x *= inv;
    }
}

pub(crate) fn log_softmax_in_place(xs: &mut [f32]) {
    let max = xs.iter().fold(f32::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0f32;
    for &x in xs.iter() {
        sum += exp_scalar(x - max);
    }
    let shift = max + sum.ln();
    for x in xs.iter_mut() {
        *x -= shift;
    }
}

fn checked(v: &[f32], what: &str) -> Result<Vec<f32>> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{what}: non-finite input {x}")));
    }
    Ok(v.to_vec())
}

/// Normalized exponentials, computed after subtracting the maximum.
pub fn softmax(v: &[f32]) -> Result<Vec<f32>> {
    let mut out = checked(v, "softmax")?;
    if !out.is_empty() {
        softmax_in_place(&mut out);
    }
    Ok(out)
}

pub fn log_softmax(v: &[f32]) -> Result<Vec<f32>> {
    let mut out = checked(v, "log_softmax")?;
    if !out.is_empty() {
        log_softmax_in_place(&mut out);
    }
    Ok(out)
}

pub fn sigmoid(v: &[f32]) -> Result<Vec<f32>> {
    let mut out = checked(v, "sigmoid")?;
    sigmoid_in_place(&mut out);
    Ok(out)
}

pub fn tanh_f32(v: &[f32]) -> Result<Vec<f32>> {
    let mut out = checked(v, "tanh")?;
    tanh_in_place(&mut out);
    Ok(out)
}

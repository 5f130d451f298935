//! Matrix × narrow-panel kernels.
//!
//! All kernels here compute `out[j][i] = dot(a.row(i), bt.row(j))` where `a` is an
//! `m × k` weight matrix and `bt` holds the `p` panel columns transposed (`p × k`).
//! The output is batch-major: one contiguous row of `m` results per panel column.
//! Four rows of `a` are processed per pass so each loaded panel chunk is reused.
//!
//! The integer kernels are exact: every ISA path returns the same integer sums.

mod scalar;
#[cfg(target_arch = "x86_64")]
mod x86;

use std::sync::OnceLock;

/// Largest inner dimension for which a 32-bit accumulator cannot overflow:
/// `k · 127² < 2³¹`. Longer products fall back to a 64-bit accumulating path.
pub const MAX_I32_DEPTH: usize = 131_000;

/// Instruction-set path used by the panel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Isa {
    Scalar,
    /// AVX2 + FMA.
    Avx2,
    /// AVX-512 F/BW with VNNI dot products.
    Avx512,
}

impl Isa {
    pub fn name(self) -> &'static str {
        match self {
            Isa::Scalar => "scalar",
            Isa::Avx2 => "avx2",
            Isa::Avx512 => "avx512-vnni",
        }
    }

    pub fn is_supported(self) -> bool {
        match self {
            Isa::Scalar => true,
            #[cfg(target_arch = "x86_64")]
            Isa::Avx2 => is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"),
            #[cfg(target_arch = "x86_64")]
            Isa::Avx512 => {
                is_x86_feature_detected!("avx512f")
                    && is_x86_feature_detected!("avx512bw")
                    && is_x86_feature_detected!("avx512vnni")
            }
            #[cfg(not(target_arch = "x86_64"))]
            _ => false,
        }
    }
}

/// Every ISA path usable on this machine, scalar first.
pub fn available_isas() -> Vec<Isa> {
    [Isa::Scalar, Isa::Avx2, Isa::Avx512]
        .into_iter()
        .filter(|i| i.is_supported())
        .collect()
}

/// Best supported ISA. `QNMT_ISA=scalar|avx2|avx512` caps the choice.
pub fn detected_isa() -> Isa {
    static ISA: OnceLock<Isa> = OnceLock::new();
    *ISA.get_or_init(|| {
        let best = available_isas().pop().unwrap_or(Isa::Scalar);
        match std::env::var("QNMT_ISA").as_deref() {
            Ok("scalar") => Isa::Scalar,
            Ok("avx2") if Isa::Avx2.is_supported() => Isa::Avx2,
            _ => best,
        }
    })
}

/// Sums of each weight row, needed by the VNNI path.
pub fn row_sums(a: &[i8], m: usize, k: usize) -> Vec<i32> {
    (0..m)
        .map(|i| a[i * k..(i + 1) * k].iter().map(|&v| v as i32).sum())
        .collect()
}

/// Integer panel product. `acc` receives `p × m` exact sums.
///
/// `sums` are the row sums of `a`; they are computed on demand when the selected
/// path needs them and none are supplied.
pub fn i8_panel(
    isa: Isa,
    a: &[i8],
    m: usize,
    k: usize,
    sums: Option<&[i32]>,
    bt: &[i8],
    p: usize,
    acc: &mut [i64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(bt.len(), p * k);
    assert_eq!(acc.len(), m * p);
    if k > MAX_I32_DEPTH {
        scalar::i8_panel_wide(a, m, k, bt, p, acc);
        return;
    }
    match isa {
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 if isa.is_supported() => {
            let owned;
            let sums = match sums {
                Some(s) => s,
                None => {
                    owned = row_sums(a, m, k);
                    &owned
                }
            };
            assert_eq!(sums.len(), m);
            // SAFETY: feature support checked above; slice lengths asserted.
            unsafe { x86::i8_panel_vnni(a, m, k, sums, bt, p, acc) }
        }
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 | Isa::Avx512 if Isa::Avx2.is_supported() => {
            // SAFETY: as above.
            unsafe { x86::i8_panel_avx2(a, m, k, bt, p, acc) }
        }
        _ => {
            let _ = sums;
            scalar::i8_panel(a, m, k, bt, p, acc)
        }
    }
}

/// Float panel product. `out` receives `p × m` dot products.
pub fn f32_panel(isa: Isa, a: &[f32], m: usize, k: usize, bt: &[f32], p: usize, out: &mut [f32]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(bt.len(), p * k);
    assert_eq!(out.len(), m * p);
    match isa {
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 if isa.is_supported() => {
            // SAFETY: feature support checked above; slice lengths asserted.
            unsafe { x86::f32_panel_avx512(a, m, k, bt, p, out) }
        }
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 | Isa::Avx512 if Isa::Avx2.is_supported() => {
            // SAFETY: as above.
            unsafe { x86::f32_panel_avx2(a, m, k, bt, p, out) }
        }
        _ => scalar::f32_panel(a, m, k, bt, p, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> u64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *seed >> 33
    }

    fn rand_i8(n: usize, seed: &mut u64) -> Vec<i8> {
        (0..n).map(|_| (lcg(seed) % 255) as i8 as i16 as i8).map(|v| v.max(-127)).collect()
    }

    #[test]
    fn every_isa_agrees_on_awkward_shapes() {
        let mut seed = 7;
        for &(m, k, p) in &[(1, 1, 1), (5, 33, 3), (9, 64, 2), (7, 129, 5), (4, 200, 1), (13, 65, 8)] {
            let a = rand_i8(m * k, &mut seed);
            let bt = rand_i8(p * k, &mut seed);
            let mut reference = vec![0i64; m * p];
            for j in 0..p {
                for i in 0..m {
                    reference[j * m + i] = (0..k).map(|t| a[i * k + t] as i64 * bt[j * k + t] as i64).sum();
                }
            }
            for isa in available_isas() {
                let mut acc = vec![0i64; m * p];
                i8_panel(isa, &a, m, k, None, &bt, p, &mut acc);
                assert_eq!(acc, reference, "{isa:?} m={m} k={k} p={p}");
            }
        }
    }

    #[test]
    fn extreme_values_do_not_saturate() {
        let (m, k, p) = (4, 1000, 2);
        let a = vec![127i8; m * k];
        let mut bt = vec![127i8; k];
        bt.extend(vec![-127i8; k]);
        for isa in available_isas() {
            let mut acc = vec![0i64; m * p];
            i8_panel(isa, &a, m, k, None, &bt, p, &mut acc);
            assert!(acc[..m].iter().all(|&v| v == 1000 * 127 * 127), "{isa:?}");
            assert!(acc[m..].iter().all(|&v| v == -1000 * 127 * 127), "{isa:?}");
        }
    }

    #[test]
    fn wide_depth_uses_64_bit_accumulation() {
        let k = MAX_I32_DEPTH + 10_000;
        let a = vec![127i8; k];
        let bt = vec![127i8; k];
        let mut acc = vec![0i64; 1];
        i8_panel(detected_isa(), &a, 1, k, None, &bt, 1, &mut acc);
        assert_eq!(acc[0], k as i64 * 127 * 127);
        assert!(acc[0] > i32::MAX as i64);
    }

    #[test]
    fn f32_paths_agree() {
        let mut seed = 11;
        let (m, k, p) = (11, 77, 3);
        let a: Vec<f32> = (0..m * k).map(|_| (lcg(&mut seed) % 1000) as f32 / 500.0 - 1.0).collect();
        let bt: Vec<f32> = (0..p * k).map(|_| (lcg(&mut seed) % 1000) as f32 / 500.0 - 1.0).collect();
        let mut reference = vec![0f32; m * p];
        scalar::f32_panel(&a, m, k, &bt, p, &mut reference);
        for isa in available_isas() {
            let mut out = vec![0f32; m * p];
            f32_panel(isa, &a, m, k, &bt, p, &mut out);
            for (x, y) in out.iter().zip(&reference) {
                assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "{isa:?}: {x} vs {y}");
            }
        }
    }
}

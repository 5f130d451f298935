//! x86-64 SIMD kernels, selected at run time.
//!
//! AVX2 integer path: `maddubs` needs an unsigned left operand, so `|a|` is paired
//! with `b` carrying the sign of `a`. Each i16 lane then holds at most
//! `2 · 127 · 127 = 32258`, below the saturation point.
//!
//! VNNI path: the panel is shifted into `u8` by adding 128, then
//! `Σ (b + 128) · a = Σ a · b + 128 · Σ a`; the weight row sums undo the shift.
//! `vpdpbusd` wraps rather than saturates and the true result fits in `i32`, so the
//! wrapped arithmetic is exact.

use std::arch::x86_64::*;

#[inline]
#[target_feature(enable = "avx2")]
unsafe fn hsum_epi32(v: __m256i) -> i32 {
    let s = _mm_add_epi32(_mm256_castsi256_si128(v), _mm256_extracti128_si256(v, 1));
    let s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0b01_00_11_10));
    let s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0b10_11_00_01));
    _mm_cvtsi128_si32(s)
}

#[inline]
#[target_feature(enable = "avx2")]
unsafe fn hsum_ps(v: __m256) -> f32 {
    let s = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
    let s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    let s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0b01));
    _mm_cvtss_f32(s)
}

#[inline]
#[target_feature(enable = "avx2")]
unsafe fn madd_i8(acc: __m256i, a: __m256i, b: __m256i, ones: __m256i) -> __m256i {
    let prod = _mm256_maddubs_epi16(_mm256_sign_epi8(a, a), _mm256_sign_epi8(b, a));
    _mm256_add_epi32(acc, _mm256_madd_epi16(prod, ones))
}

#[target_feature(enable = "avx2")]
pub(super) unsafe fn i8_panel_avx2(a: &[i8], m: usize, k: usize, bt: &[i8], p: usize, acc: &mut [i64]) {
    const W: usize = 32;
    let kv = k / W * W;
    let ones = _mm256_set1_epi16(1);
    let ap = a.as_ptr();
    let bp = bt.as_ptr();
    let tail = |row: usize, col: usize| -> i32 {
        (kv..k).map(|t| a[row * k + t] as i32 * bt[col * k + t] as i32).sum()
    };

    let mut i = 0;
    while i + 4 <= m {
        let rows = [ap.add(i * k), ap.add((i + 1) * k), ap.add((i + 2) * k), ap.add((i + 3) * k)];
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = [_mm256_setzero_si256(); 4];
            let mut t = 0;
            while t < kv {
                let b = _mm256_loadu_si256(b_row.add(t) as *const __m256i);
                for r in 0..4 {
                    let av = _mm256_loadu_si256(rows[r].add(t) as *const __m256i);
                    s[r] = madd_i8(s[r], av, b, ones);
                }
                t += W;
            }
            for r in 0..4 {
                acc[j * m + i + r] = (hsum_epi32(s[r]) + tail(i + r, j)) as i64;
            }
        }
        i += 4;
    }
    for i in i..m {
        let row = ap.add(i * k);
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = _mm256_setzero_si256();
            let mut t = 0;
            while t < kv {
                let b = _mm256_loadu_si256(b_row.add(t) as *const __m256i);
                let av = _mm256_loadu_si256(row.add(t) as *const __m256i);
                s = madd_i8(s, av, b, ones);
                t += W;
            }
            acc[j * m + i] = (hsum_epi32(s) + tail(i, j)) as i64;
        }
    }
}

#[target_feature(enable = "avx512f,avx512bw,avx512vnni")]
pub(super) unsafe fn i8_panel_vnni(
    a: &[i8],
    m: usize,
    k: usize,
    sums: &[i32],
    bt: &[i8],
    p: usize,
    acc: &mut [i64],
) {
    const W: usize = 64;
    // Panel shifted into u8 once per call.
    let shifted: Vec<u8> = bt.iter().map(|&v| (v as u8) ^ 0x80).collect();
    let ap = a.as_ptr();
    let bp = shifted.as_ptr();
    let kv = k / W * W;
    let rem = k - kv;
    let mask: __mmask64 = if rem == 0 { 0 } else { (1u64 << rem) - 1 };

    let finish = |raw: i32, row: usize| -> i64 { raw.wrapping_sub(sums[row].wrapping_mul(128)) as i64 };

    let mut i = 0;
    while i + 4 <= m {
        let rows = [ap.add(i * k), ap.add((i + 1) * k), ap.add((i + 2) * k), ap.add((i + 3) * k)];
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = [_mm512_setzero_si512(); 4];
            let mut t = 0;
            while t < kv {
                let b = _mm512_loadu_si512(b_row.add(t) as *const _);
                for r in 0..4 {
                    let av = _mm512_loadu_si512(rows[r].add(t) as *const _);
                    s[r] = _mm512_dpbusd_epi32(s[r], b, av);
                }
                t += W;
            }
            if rem != 0 {
                let b = _mm512_maskz_loadu_epi8(mask, b_row.add(kv) as *const i8);
                for r in 0..4 {
                    let av = _mm512_maskz_loadu_epi8(mask, rows[r].add(kv));
                    s[r] = _mm512_dpbusd_epi32(s[r], b, av);
                }
            }
            for r in 0..4 {
                acc[j * m + i + r] = finish(_mm512_reduce_add_epi32(s[r]), i + r);
            }
        }
        i += 4;
    }
    for i in i..m {
        let row = ap.add(i * k);
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = _mm512_setzero_si512();
            let mut t = 0;
            while t < kv {
                let b = _mm512_loadu_si512(b_row.add(t) as *const _);
                let av = _mm512_loadu_si512(row.add(t) as *const _);
                s = _mm512_dpbusd_epi32(s, b, av);
                t += W;
            }
            if rem != 0 {
                let b = _mm512_maskz_loadu_epi8(mask, b_row.add(kv) as *const i8);
                let av = _mm512_maskz_loadu_epi8(mask, row.add(kv));
                s = _mm512_dpbusd_epi32(s, b, av);
            }
            acc[j * m + i] = finish(_mm512_reduce_add_epi32(s), i);
        }
    }
}

#[target_feature(enable = "avx2,fma")]
pub(super) unsafe fn f32_panel_avx2(a: &[f32], m: usize, k: usize, bt: &[f32], p: usize, out: &mut [f32]) {
    const W: usize = 8;
    let kv = k / W * W;
    let ap = a.as_ptr();
    let bp = bt.as_ptr();
    let tail = |row: usize, col: usize| -> f32 { (kv..k).map(|t| a[row * k + t] * bt[col * k + t]).sum() };

    let mut i = 0;
    while i + 4 <= m {
        let rows = [ap.add(i * k), ap.add((i + 1) * k), ap.add((i + 2) * k), ap.add((i + 3) * k)];
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = [_mm256_setzero_ps(); 4];
            let mut t = 0;
            while t < kv {
                let b = _mm256_loadu_ps(b_row.add(t));
                for r in 0..4 {
                    s[r] = _mm256_fmadd_ps(_mm256_loadu_ps(rows[r].add(t)), b, s[r]);
                }
                t += W;
            }
            for r in 0..4 {
                out[j * m + i + r] = hsum_ps(s[r]) + tail(i + r, j);
            }
        }
        i += 4;
    }
    for i in i..m {
        let row = ap.add(i * k);
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = _mm256_setzero_ps();
            let mut t = 0;
            while t < kv {
                s = _mm256_fmadd_ps(_mm256_loadu_ps(row.add(t)), _mm256_loadu_ps(b_row.add(t)), s);
                t += W;
            }
            out[j * m + i] = hsum_ps(s) + tail(i, j);
        }
    }
}

#[target_feature(enable = "avx512f")]
pub(super) unsafe fn f32_panel_avx512(a: &[f32], m: usize, k: usize, bt: &[f32], p: usize, out: &mut [f32]) {
    const W: usize = 16;
    let kv = k / W * W;
    let rem = k - kv;
    let mask: __mmask16 = if rem == 0 { 0 } else { ((1u32 << rem) - 1) as u16 };
    let ap = a.as_ptr();
    let bp = bt.as_ptr();

    let mut i = 0;
    while i + 4 <= m {
        let rows = [ap.add(i * k), ap.add((i + 1) * k), ap.add((i + 2) * k), ap.add((i + 3) * k)];
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = [_mm512_setzero_ps(); 4];
            let mut t = 0;
            while t < kv {
                let b = _mm512_loadu_ps(b_row.add(t));
                for r in 0..4 {
                    s[r] = _mm512_fmadd_ps(_mm512_loadu_ps(rows[r].add(t)), b, s[r]);
                }
                t += W;
            }
            if rem != 0 {
                let b = _mm512_maskz_loadu_ps(mask, b_row.add(kv));
                for r in 0..4 {
                    s[r] = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(mask, rows[r].add(kv)), b, s[r]);
                }
            }
            for r in 0..4 {
                out[j * m + i + r] = _mm512_reduce_add_ps(s[r]);
            }
        }
        i += 4;
    }
    for i in i..m {
        let row = ap.add(i * k);
        for j in 0..p {
            let b_row = bp.add(j * k);
            let mut s = _mm512_setzero_ps();
            let mut t = 0;
            while t < kv {
                s = _mm512_fmadd_ps(_mm512_loadu_ps(row.add(t)), _mm512_loadu_ps(b_row.add(t)), s);
                t += W;
            }
            if rem != 0 {
                let b = _mm512_maskz_loadu_ps(mask, b_row.add(kv));
                s = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(mask, row.add(kv)), b, s);
            }
            out[j * m + i] = _mm512_reduce_add_ps(s);
        }
    }
}

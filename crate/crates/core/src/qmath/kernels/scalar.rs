//! Portable kernels. Written so the inner loops auto-vectorize.

pub(super) fn i8_panel(a: &[i8], m: usize, k: usize, bt: &[i8], p: usize, acc: &mut [i64]) {
    let mut i = 0;
    while i + 4 <= m {
        let r0 = &a[i * k..(i + 1) * k];
        let r1 = &a[(i + 1) * k..(i + 2) * k];
        let r2 = &a[(i + 2) * k..(i + 3) * k];
        let r3 = &a[(i + 3) * k..(i + 4) * k];
        for j in 0..p {
            let b = &bt[j * k..(j + 1) * k];
            let (mut s0, mut s1, mut s2, mut s3) = (0i32, 0i32, 0i32, 0i32);
            for t in 0..k {
                let bv = b[t] as i32;
                s0 += r0[t] as i32 * bv;
                s1 += r1[t] as i32 * bv;
                s2 += r2[t] as i32 * bv;
                s3 += r3[t] as i32 * bv;
            }
            let out = &mut acc[j * m + i..j * m + i + 4];
            out.copy_from_slice(&[s0 as i64, s1 as i64, s2 as i64, s3 as i64]);
        }
        i += 4;
    }
    for i in i..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..p {
            let b = &bt[j * k..(j + 1) * k];
            let s: i32 = row.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum();
            acc[j * m + i] = s as i64;
        }
    }
}

/// 64-bit accumulating variant for depths beyond the `i32` safety bound.
pub(super) fn i8_panel_wide(a: &[i8], m: usize, k: usize, bt: &[i8], p: usize, acc: &mut [i64]) {
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..p {
            let b = &bt[j * k..(j + 1) * k];
            acc[j * m + i] = row.iter().zip(b).map(|(&x, &y)| x as i64 * y as i64).sum();
        }
    }
}

const LANES: usize = 8;

#[inline]
fn dot_f32(x: &[f32], y: &[f32]) -> f32 {
    let mut lanes = [0f32; LANES];
    let chunks = x.len() / LANES;
    for c in 0..chunks {
        let xs = &x[c * LANES..(c + 1) * LANES];
        let ys = &y[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            lanes[l] += xs[l] * ys[l];
        }
    }
    let mut s: f32 = lanes.iter().sum();
    for t in chunks * LANES..x.len() {
        s += x[t] * y[t];
    }
    s
}

pub(super) fn f32_panel(a: &[f32], m: usize, k: usize, bt: &[f32], p: usize, out: &mut [f32]) {
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..p {
            out[j * m + i] = dot_f32(row, &bt[j * k..(j + 1) * k]);
        }
    }
}

#![allow(dead_code)]

use qnmt::model::{ModelParams, EOS_ID};
use qnmt::qmath::{FloatMatrix, QuantizedMatrix};
use qnmt::layers::{AttentionQuery, InitMode};
use rand::Rng;

pub fn int_oracle(a: &QuantizedMatrix, b: &QuantizedMatrix) -> Vec<f32> {
    let (m, k, p) = (a.rows(), a.cols(), b.cols());
    let denom = a.scale() * b.scale();
    let mut out = Vec::with_capacity(m * p);
    for i in 0..m {
        for j in 0..p {
            let mut s: i32 = 0;
            for t in 0..k {
                s += a.get(i, t) as i32 * b.get(t, j) as i32;
            }
            out.push(s as f32 / denom);
        }
    }
    out
}

pub fn random_q(rng: &mut impl Rng, rows: usize, cols: usize) -> QuantizedMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-127i8..=127)).collect();
    let scale = rng.gen_range(0.5f32..400.0);
    QuantizedMatrix::new(rows, cols, data, scale).unwrap()
}

pub fn random_f(rng: &mut impl Rng, rows: usize, cols: usize, range: f32) -> FloatMatrix {
    FloatMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-range..=range))
}

/// `‖a − b‖∞ / ‖b‖∞`, with the denominator floored at 1e-30.
pub fn rel_inf(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-30);
    num / den
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn rel_l2(a: &[f32], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(1e-300)).sqrt()
}

#[derive(Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn from(m: &FloatMatrix) -> Self {
        Mat {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.data[r * self.cols + c] * x[c]).sum())
            .collect()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

pub struct RefGru {
    pub w: Mat,
    pub b: Vec<f64>,
    pub u: Mat,
    pub uc: Mat,
}

impl RefGru {
    pub fn new(w: &FloatMatrix, b: &FloatMatrix, u: &FloatMatrix, uc: &FloatMatrix) -> Self {
        RefGru {
            w: Mat::from(w),
            b: b.as_slice().iter().map(|&x| x as f64).collect(),
            u: Mat::from(u),
            uc: Mat::from(uc),
        }
    }

    fn from_params(g: &qnmt::model::GruParams) -> Self {
        Self::new(&g.input, &g.bias, &g.state_gates, &g.state_candidate)
    }

    /// One transition, gate by gate.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let wx = add(&self.w.mul(x), &self.b);
        let uh = self.u.mul(h);
        let mut out = vec![0.0; n];
        let mut rh = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            z[i] = sigmoid(wx[i] + uh[i]);
            let r = sigmoid(wx[n + i] + uh[n + i]);
            rh[i] = r * h[i];
        }
        let c = self.uc.mul(&rh);
        for i in 0..n {
            let cand = (wx[2 * n + i] + c[i]).tanh();
            out[i] = (1.0 - z[i]) * h[i] + z[i] * cand;
        }
        out
    }
}

/// Straight-line `f64` evaluation of a translation model.
pub struct Reference {
    pub src_embed: Mat,
    pub tgt_embed: Mat,
    pub fwd: RefGru,
    pub bwd: RefGru,
    pub dec1: RefGru,
    pub dec2: RefGru,
    pub att_enc: Mat,
    pub att_bias: Vec<f64>,
    pub att_state: Mat,
    pub att_score: Vec<f64>,
    pub out_state: Mat,
    pub out_bias: Vec<f64>,
    pub out_prev: Mat,
    pub out_ctx: Mat,
    pub out_vocab: Mat,
    pub out_vocab_bias: Vec<f64>,
    pub init: Option<(Mat, Vec<f64>)>,
    pub query: AttentionQuery,
    pub hidden: usize,
    pub embed: usize,
}

fn vecf(m: &FloatMatrix) -> Vec<f64> {
    m.as_slice().iter().map(|&x| x as f64).collect()
}

#[derive(Clone, Debug)]
pub struct RefState {
    pub s: Vec<f64>,
    pub intermediate: Vec<f64>,
}

pub struct RefEncoded {
    /// `[backward_i ; forward_i]` per source position.
    pub states: Vec<Vec<f64>>,
    pub backward_first: Vec<f64>,
}

pub struct RefStep {
    pub log_probs: Vec<f64>,
    pub state: RefState,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
}

impl Reference {
    pub fn new(p: &ModelParams) -> Self {
        Reference {
            src_embed: Mat::from(&p.src_embed),
            tgt_embed: Mat::from(&p.tgt_embed),
            fwd: RefGru::from_params(&p.enc_forward),
            bwd: RefGru::from_params(&p.enc_backward),
            dec1: RefGru::from_params(&p.dec_first),
            dec2: RefGru::from_params(&p.dec_second),
            att_enc: Mat::from(&p.att_encoder),
            att_bias: vecf(&p.att_bias),
            att_state: Mat::from(&p.att_state),
            att_score: vecf(&p.att_score),
            out_state: Mat::from(&p.out_state),
            out_bias: vecf(&p.out_bias),
            out_prev: Mat::from(&p.out_prev),
            out_ctx: Mat::from(&p.out_context),
            out_vocab: Mat::from(&p.out_vocab),
            out_vocab_bias: vecf(&p.out_vocab_bias),
            init: match p.init_mode {
                InitMode::Learned => Some((Mat::from(&p.init_weight), vecf(&p.init_bias))),
                InitMode::Zero => None,
            },
            query: p.attention_query,
            hidden: p.dims.hidden,
            embed: p.dims.embed,
        }
    }

    pub fn encode(&self, src: &[u32]) -> RefEncoded {
        let l = src.len();
        let x: Vec<Vec<f64>> = src.iter().map(|&t| self.src_embed.row(t as usize)).collect();
        let mut fwd = vec![Vec::new(); l];
        let mut h = vec![0.0; self.hidden];
        for i in 0..l {
            h = self.fwd.step(&x[i], &h);
            fwd[i] = h.clone();
        }
        let mut bwd = vec![Vec::new(); l];
        let mut h = vec![0.0; self.hidden];
        for i in (0..l).rev() {
            h = self.bwd.step(&x[i], &h);
            bwd[i] = h.clone();
        }
        RefEncoded {
            states: (0..l).map(|i| [bwd[i].clone(), fwd[i].clone()].concat()).collect(),
            backward_first: bwd[0].clone(),
        }
    }

    pub fn initial(&self, enc: &RefEncoded) -> RefState {
        let s = match &self.init {
            Some((w, b)) => add(&w.mul(&enc.backward_first), b).iter().map(|v| v.tanh()).collect(),
            None => vec![0.0; self.hidden],
        };
        RefState {
            intermediate: s.clone(),
            s,
        }
    }

    pub fn step(&self, prev: Option<u32>, st: &RefState, enc: &RefEncoded) -> RefStep {
        let emb = match prev {
            Some(t) => self.tgt_embed.row(t as usize),
            None => vec![0.0; self.embed],
        };
        let s1 = self.dec1.step(&emb, &st.s);
        let q = match self.query {
            AttentionQuery::Current => &s1,
            AttentionQuery::Previous => &st.intermediate,
        };
        let uq = self.att_state.mul(q);
        let scores: Vec<f64> = enc
            .states
            .iter()
            .map(|hs| {
                let wh = add(&self.att_enc.mul(hs), &self.att_bias);
                wh.iter()
                    .zip(&uq)
                    .zip(&self.att_score)
                    .map(|((a, b), v)| v * (a + b).tanh())
                    .sum()
            })
            .collect();
        let alpha: Vec<f64> = log_softmax(&scores).iter().map(|x| x.exp()).collect();
        let w = 2 * self.hidden;
        let mut ctx = vec![0.0; w];
        for (a, hs) in alpha.iter().zip(&enc.states) {
            for c in 0..w {
                ctx[c] += a * hs[c];
            }
        }
        let s2 = self.dec2.step(&ctx, &s1);
        let r1 = self.out_state.mul(&s2);
        let r2 = self.out_prev.mul(&emb);
        let r3 = self.out_ctx.mul(&ctx);
        let readout: Vec<f64> = (0..r1.len())
            .map(|i| (r1[i] + r2[i] + r3[i] + self.out_bias[i]).tanh())
            .collect();
        let logits = add(&self.out_vocab.mul(&readout), &self.out_vocab_bias);
        RefStep {
            log_probs: log_softmax(&logits),
            state: RefState {
                s: s2,
                intermediate: s1,
            },
            alpha,
            context: ctx,
        }
    }

    /// Total log-probability of `tokens` (EOS included if present).
    pub fn score(&self, src: &[u32], tokens: &[u32]) -> f64 {
        let enc = self.encode(src);
        let mut st = self.initial(&enc);
        let mut prev = None;
        let mut total = 0.0;
        for &t in tokens {
            let out = self.step(prev, &st, &enc);
            total += out.log_probs[t as usize];
            st = out.state;
            prev = Some(t);
        }
        total
    }

    /// The best EOS-terminated output of at most `max_len` tokens (EOS counted),
    /// by exhaustive enumeration. Returns tokens without EOS and the score.
    pub fn brute_force(&self, src: &[u32], max_len: usize) -> (Vec<u32>, f64) {
        let enc = self.encode(src);
        let st = self.initial(&enc);
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        self.explore(&enc, None, st, Vec::new(), 0.0, max_len, &mut best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn explore(
        &self,
        enc: &RefEncoded,
        prev: Option<u32>,
        st: RefState,
        prefix: Vec<u32>,
        score: f64,
        left: usize,
        best: &mut (Vec<u32>, f64),
    ) {
        if left == 0 {
            return;
        }
        let out = self.step(prev, &st, enc);
        for (t, &lp) in out.log_probs.iter().enumerate() {
            let s = score + lp;
            if t as u32 == EOS_ID {
                if s > best.1 {
                    *best = (prefix.clone(), s);
                }
            } else {
                let mut next = prefix.clone();
                next.push(t as u32);
                self.explore(enc, Some(t as u32), out.state.clone(), next, s, left - 1, best);
            }
        }
    }

    /// Greedy argmax decoding. Also returns the smallest gap between the chosen and
    /// runner-up log-probability over all steps.
    pub fn greedy(&self, src: &[u32], max_len: usize) -> (Vec<u32>, f64) {
        let enc = self.encode(src);
        let mut st = self.initial(&enc);
        let mut prev = None;
        let mut out = Vec::new();
        let mut gap = f64::INFINITY;
        for _ in 0..max_len {
            let step = self.step(prev, &st, &enc);
            let mut idx: Vec<usize> = (0..step.log_probs.len()).collect();
            idx.sort_by(|&a, &b| step.log_probs[b].total_cmp(&step.log_probs[a]).then(a.cmp(&b)));
            gap = gap.min(step.log_probs[idx[0]] - step.log_probs[idx[1]]);
            let t = idx[0] as u32;
            if t == EOS_ID {
                break;
            }
            out.push(t);
            st = step.state;
            prev = Some(t);
        }
        (out, gap)
    }
}

/// Multiplies every weight and bias tensor by `factor` so output distributions are
/// peaked and near-ties between hypotheses become unlikely.
pub fn sharpen(p: &mut ModelParams, factor: f32) {
    for m in [&mut p.out_vocab, &mut p.out_vocab_bias, &mut p.tgt_embed, &mut p.out_prev] {
        for v in m.as_mut_slice() {
            *v *= factor;
        }
    }
}

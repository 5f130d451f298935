use std::cell::RefCell;

use qnmt::decoder::{translate, DecodeConfig};
use qnmt::layers::{decoder_step, encode, initial_state, Network, Precision};
use qnmt::model::{generate_model, quantize_model, ModelParams, EOS, EOS_ID};
use qnmt::qmath::{dequantize, gemm_f32, qgemm, qgemm_panel, quantize, FloatMatrix};
use qnmt::Result;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Serialize, Debug)]
pub struct QuantizedValue {
    pub x: f32,
    pub q: i8,
    pub back: f32,
    pub error: f64,
}

#[derive(Serialize, Debug)]
pub struct QuantizeView {
    pub scale: f32,
    pub max_abs: f32,
    pub bound: f64,
    pub max_error: f64,
    pub values: Vec<QuantizedValue>,
}

/// Quantizes a whitespace- or comma-separated list of numbers as one tensor.
pub fn quantize_values(text: &str) -> Result<QuantizeView> {
    let xs = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f32>()
                .map_err(|_| qnmt::Error::InvalidInput(format!("not a number: {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if xs.is_empty() {
        return Err(qnmt::Error::EmptyInput("value list"));
    }
    let m = FloatMatrix::new(1, xs.len(), xs)?;
    let q = quantize(&m)?;
    let back = dequantize(&q);
    let values: Vec<QuantizedValue> = m
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .zip(back.as_slice())
        .map(|((&x, &v), &b)| QuantizedValue {
            x,
            q: v,
            back: b,
            error: (x as f64 - v as f64 / q.scale() as f64).abs(),
        })
        .collect();
    Ok(QuantizeView {
        scale: q.scale(),
        max_abs: m.max_abs(),
        bound: 0.5 / q.scale() as f64,
        max_error: values.iter().map(|v| v.error).fold(0.0, f64::max),
        values,
    })
}

#[derive(Serialize, Debug)]
pub struct MatmulView {
    pub m: usize,
    pub k: usize,
    pub p: usize,
    /// `‖int8 − fp32‖₂ / ‖fp32‖₂`.
    pub relative_l2: f64,
    pub max_abs_error: f64,
    pub weight_scale: f32,
    pub activation_scale: f32,
    /// Panel and naive integer products agree bit for bit.
    pub kernels_agree: bool,
    /// Leading rows of both results, `rows × p` each.
    pub fp32_sample: Vec<Vec<f32>>,
    pub int8_sample: Vec<Vec<f32>>,
}

fn uniform(rng: &mut ChaCha8Rng, range: f32) -> f32 {
    ((rng.next_u32() >> 8) as f32 / 16_777_216.0 * 2.0 - 1.0) * range
}

/// Weights in ±0.1 times activations in ±1, multiplied in `f32` and in int8.
pub fn matmul_compare(m: usize, k: usize, p: usize, seed: u64) -> Result<MatmulView> {
    if m == 0 || k == 0 || p == 0 || m * k > 4_000_000 || k * p > 1_000_000 {
        return Err(qnmt::Error::InvalidInput(format!("unsupported size {m}x{k}x{p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = FloatMatrix::from_fn(m, k, |_, _| uniform(&mut rng, 0.1));
    let x = FloatMatrix::from_fn(k, p, |_, _| uniform(&mut rng, 1.0));
    let exact = gemm_f32(&w, &x)?;
    let (qw, qx) = (quantize(&w)?, quantize(&x)?);
    let panel = qgemm_panel(&qw, &qx, p < 10)?;
    let naive = qgemm(&qw, &qx)?;
    let (mut num, mut den, mut worst) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in panel.as_slice().iter().zip(exact.as_slice()) {
        let d = (a - b) as f64;
        num += d * d;
        den += (b as f64) * (b as f64);
        worst = worst.max(d.abs());
    }
    let rows = m.min(8);
    Ok(MatmulView {
        m,
        k,
        p,
        relative_l2: (num / den.max(f64::MIN_POSITIVE)).sqrt(),
        max_abs_error: worst,
        weight_scale: qw.scale(),
        activation_scale: qx.scale(),
        kernels_agree: panel == naive,
        fp32_sample: (0..rows).map(|r| exact.row(r).to_vec()).collect(),
        int8_sample: (0..rows).map(|r| panel.row(r).to_vec()).collect(),
    })
}

#[derive(Serialize, Debug)]
pub struct DecodeView {
    pub text: String,
    pub tokens: Vec<String>,
    pub log_prob: f32,
    pub finished: bool,
    /// One row per emitted token (EOS included when finished), one column per
    /// source token.
    pub attention: Vec<Vec<f32>>,
}

#[derive(Serialize, Debug)]
pub struct TranslateView {
    pub source: Vec<String>,
    pub fp32: DecodeView,
    pub int8: DecodeView,
    pub identical: bool,
}

pub const DEMO_VOCAB: usize = 100;
pub const DEMO_EMBED: usize = 32;
pub const DEMO_HIDDEN: usize = 64;

struct Cached {
    seed: u64,
    params: ModelParams,
    fp32: Network,
    int8: Network,
}

thread_local! {
    static MODEL: RefCell<Option<Cached>> = const { RefCell::new(None) };
}

fn decode_view(net: &Network, params: &ModelParams, src: &[u32], beam: usize) -> Result<DecodeView> {
    let cfg = DecodeConfig {
        beam,
        max_ratio: 3.0,
        precision: net.precision(),
    };
    let t = translate(&[net], src, &cfg)?;
    let mut emitted = t.tokens.clone();
    if t.finished {
        emitted.push(EOS_ID);
    }
    let enc = encode(net, src)?;
    let mut state = initial_state(net, &enc);
    let mut prev = None;
    let mut attention = Vec::with_capacity(emitted.len());
    for &tok in &emitted {
        let out = decoder_step(net, &[prev], &state, &enc.states)?;
        attention.push(out.alpha.row(0).to_vec());
        state = out.state;
        prev = Some(tok);
    }
    let mut tokens = params.tgt_vocab.decode(&t.tokens);
    if t.finished {
        tokens.push(EOS.to_string());
    }
    Ok(DecodeView {
        text: qnmt::decoder::render(&params.tgt_vocab, &t.tokens),
        tokens,
        log_prob: t.log_prob,
        finished: t.finished,
        attention,
    })
}

/// Translates `sentence` with a seeded random desk-size model at both precisions.
pub fn translate_both(sentence: &str, seed: u64, beam: usize) -> Result<TranslateView> {
    MODEL.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.as_ref().map_or(true, |c| c.seed != seed) {
            let params = generate_model(DEMO_VOCAB, DEMO_VOCAB, DEMO_EMBED, DEMO_HIDDEN, seed)?;
            let fp32 = params.network(Precision::Fp32)?;
            let int8 = quantize_model(&params)?.network;
            *slot = Some(Cached { seed, params, fp32, int8 });
        }
        let c = slot.as_ref().unwrap();
        let src = c.params.src_vocab.encode_line(sentence);
        if src.is_empty() {
            return Err(qnmt::Error::EmptyInput("source sentence"));
        }
        let fp32 = decode_view(&c.fp32, &c.params, &src, beam)?;
        let int8 = decode_view(&c.int8, &c.params, &src, beam)?;
        Ok(TranslateView {
            source: src.iter().map(|&i| c.params.src_vocab.token(i).unwrap_or("<unk>").to_string()).collect(),
            identical: fp32.tokens == int8.tokens,
            fp32,
            int8,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_view_respects_bound() {
        let v = quantize_values("0.5, -1.27 0.003\n2").unwrap();
        assert_eq!(v.values.len(), 4);
        assert_eq!(v.scale, 63.5);
        assert_eq!(v.values[3].q, 127);
        assert!(v.max_error <= v.bound);
        assert!(quantize_values("1 two").is_err());
        assert!(quantize_values("  ").is_err());
    }

    #[test]
    fn matmul_view_is_close_and_exact() {
        let v = matmul_compare(64, 200, 5, 3).unwrap();
        assert!(v.kernels_agree);
        assert!(v.relative_l2 < 0.02, "{}", v.relative_l2);
        assert_eq!(v.fp32_sample.len(), 8);
        assert_eq!(v.int8_sample[0].len(), 5);
        assert!(matmul_compare(0, 1, 1, 0).is_err());
    }

    #[test]
    fn translate_view_has_attention_rows() {
        let v = translate_both("w0001 w0002 w0003", 1, 3).unwrap();
        assert_eq!(v.source.len(), 3);
        for d in [&v.fp32, &v.int8] {
            assert_eq!(d.attention.len(), d.tokens.len());
            for row in &d.attention {
                assert_eq!(row.len(), 3);
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
        }
        let again = translate_both("w0001 w0002 w0003", 1, 3).unwrap();
        assert_eq!(again.fp32.tokens, v.fp32.tokens);
        assert!(translate_both("", 1, 3).is_err());
    }
}

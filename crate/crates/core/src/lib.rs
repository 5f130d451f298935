//! CPU inference for attentional GRU encoder-decoder translation models with a
//! 32-bit float and an 8-bit integer execution path.
//!
//! The crate is layered bottom-up: [`qmath`] (quantization and GEMM kernels),
//! [`layers`] (GRU, attention and output network over precision-tagged linear
//! operators), [`model`] (parameters, file format, quantization pass),
//! [`decoder`] (beam search, ensembles, BPE reassembly, precision parity) and
//! [`bench`] (throughput and phase profiling).

pub mod bench;
pub mod bleu;
pub mod decoder;
mod error;
pub mod layers;
pub mod model;
pub mod profile;
pub mod qmath;

pub use error::{Error, Result};

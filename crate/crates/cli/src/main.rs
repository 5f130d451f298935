mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qnmt::layers::Precision;

/// Quantized neural machine translation: decode, benchmark, and compare precisions.
#[derive(Parser, Debug)]
#[command(name = "qnmt", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Translate one sentence per input line.
    Translate(TranslateArgs),
    /// Measure WPS/WPCS and phase profile, fp32 and int8 unless --precision is given.
    Bench(BenchArgs),
    /// Write a seeded random model.
    Genmodel(GenmodelArgs),
    /// Decode a corpus at two precisions and report how the outputs differ.
    Compare(CompareArgs),
    /// Per-tensor quantization scales and round-trip errors.
    QuantizeReport(QuantizeReportArgs),
    /// Corpus BLEU-4 of a hypothesis file against a reference file.
    Bleu(BleuArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Fp32,
    Int8,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Fp32 => Precision::Fp32,
            PrecisionArg::Int8 => Precision::Int8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Beam width.
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// Output length cap as a multiple of the source length.
    #[arg(long = "max-ratio", default_value_t = 3.0)]
    pub max_ratio: f64,
    /// Worker threads, one sentence each at a time.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Model file; repeat to decode with an ensemble.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Fp32)]
    pub precision: PrecisionArg,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Source text, one tokenized sentence per line [default: stdin].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Destination [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// Benchmark one precision only.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Corpus to translate; without it a random corpus is drawn from --seed.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Timed passes; the median is reported.
    #[arg(long, default_value_t = qnmt::bench::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Size of the random corpus.
    #[arg(long, default_value_t = 20)]
    pub sentences: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct GenmodelArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long = "src-vocab", default_value_t = 100)]
    pub src_vocab: usize,
    #[arg(long = "tgt-vocab", default_value_t = 100)]
    pub tgt_vocab: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Candidate precision.
    #[arg(long, value_enum, default_value_t = PrecisionArg::Int8)]
    pub precision: PrecisionArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Fp32)]
    pub baseline: PrecisionArg,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct QuantizeReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    /// Hypotheses, one tokenized sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<qnmt::Error>() {
                Some(qnmt::Error::Sentence { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use qnmt::bench::{run_benchmark, BenchReport, SpeedComparison};
use qnmt::bleu::{corpus_stats, MAX_ORDER};
use qnmt::decoder::{compare_networks, render, translate_corpus, DecodeConfig};
use qnmt::layers::{Network, Precision};
use qnmt::model::{generate_model, load_model, quantize_model, save_model, ModelParams};
use qnmt::qmath::{scale_for, QuantizationStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{BenchArgs, BleuArgs, Command, CompareArgs, Format, GenmodelArgs, QuantizeReportArgs, SearchArgs, TranslateArgs};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Translate(a) => translate(a),
        Command::Bench(a) => bench(a),
        Command::Genmodel(a) => genmodel(a),
        Command::Compare(a) => compare(a),
        Command::QuantizeReport(a) => quantize_report(a),
        Command::Bleu(a) => bleu(a),
    }
}

fn read_text(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush().context("writing stdout")
        }
    }
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<ModelParams>> {
    let models: Vec<ModelParams> = paths
        .iter()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;
    let first = &models[0];
    for (m, p) in models.iter().zip(paths).skip(1) {
        if m.src_vocab != first.src_vocab || m.tgt_vocab != first.tgt_vocab {
            bail!("{} does not share the vocabularies of {}", p.display(), paths[0].display());
        }
    }
    Ok(models)
}

fn network(params: &ModelParams, precision: Precision) -> Result<Network> {
    Ok(match precision {
        Precision::Fp32 => params.network(precision)?,
        Precision::Int8 => quantize_model(params)?.network,
    })
}

fn decode_config(search: &SearchArgs, precision: Precision) -> Result<DecodeConfig> {
    if search.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let cfg = DecodeConfig {
        beam: search.beam,
        max_ratio: search.max_ratio,
        precision,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn translate(a: TranslateArgs) -> Result<ExitCode> {
    let precision = a.precision.into();
    let cfg = decode_config(&a.search, precision)?;
    let models = load_models(&a.model)?;
    let nets: Vec<Network> = models.iter().map(|m| network(m, precision)).collect::<Result<_>>()?;
    let refs: Vec<&Network> = nets.iter().collect();
    let text = read_text(a.input.as_deref())?;

    let vocab = &models[0].src_vocab;
    let lines: Vec<&str> = text.lines().collect();
    let positions: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].trim().is_empty()).collect();
    let sources: Vec<Vec<u32>> = positions.iter().map(|&i| vocab.encode_line(lines[i])).collect();
    let results = translate_corpus(&refs, &sources, &cfg, a.search.threads);

    let mut out = vec![String::new(); lines.len()];
    let mut failed = false;
    for (&i, r) in positions.iter().zip(results) {
        match r {
            Ok(t) => out[i] = render(&models[0].tgt_vocab, &t.tokens),
            Err(e) => {
                eprintln!("warning: line {}: {:#}", i + 1, anyhow::Error::from(e));
                failed = true;
            }
        }
    }
    let mut body = String::new();
    for line in &out {
        body.push_str(line);
        body.push('\n');
    }
    write_text(a.output.as_ref(), &body)?;
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn bench_corpus(a: &BenchArgs, params: &ModelParams) -> Result<Vec<Vec<u32>>> {
    match &a.input {
        Some(p) => {
            let text = read_text(Some(p))?;
            Ok(text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| params.src_vocab.encode_line(l))
                .collect())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let v = params.dims.src_vocab as u32;
            Ok((0..a.sentences)
                .map(|_| (0..rng.gen_range(5..=20)).map(|_| rng.gen_range(3..v)).collect())
                .collect())
        }
    }
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let models = load_models(&a.model)?;
    let sentences = bench_corpus(&a, &models[0])?;
    let run = |precision: Precision| -> Result<BenchReport> {
        let cfg = decode_config(&a.search, precision)?;
        let nets: Vec<Network> = models.iter().map(|m| network(m, precision)).collect::<Result<_>>()?;
        let refs: Vec<&Network> = nets.iter().collect();
        Ok(run_benchmark(&refs, &sentences, &cfg, a.search.threads, a.repeats)?)
    };
    let body = match a.precision {
        Some(p) => {
            let report = run(p.into())?;
            match a.format {
                Format::Text => report.to_text(),
                Format::Json => {
                    let key = Precision::from(p).name();
                    serde_json::to_string_pretty(&json!({ key: report, "speed_ratio": null }))? + "\n"
                }
            }
        }
        None => {
            let cmp = SpeedComparison::new(run(Precision::Fp32)?, run(Precision::Int8)?);
            match a.format {
                Format::Text => cmp.to_text(),
                Format::Json => serde_json::to_string_pretty(&cmp)? + "\n",
            }
        }
    };
    write_text(a.output.as_ref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

fn genmodel(a: GenmodelArgs) -> Result<ExitCode> {
    let params = generate_model(a.src_vocab, a.tgt_vocab, a.embed, a.hidden, a.seed)?;
    save_model(&params, &a.output)?;
    eprintln!(
        "wrote {} ({} parameters, seed {})",
        a.output.display(),
        params.parameter_count(),
        a.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs) -> Result<ExitCode> {
    let params = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let cfg = decode_config(&a.search, a.baseline.into())?;
    let baseline = network(&params, a.baseline.into())?;
    let candidate = network(&params, a.precision.into())?;
    let text = read_text(a.input.as_deref())?;
    let sentences: Vec<Vec<u32>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| params.src_vocab.encode_line(l))
        .collect();
    let report = compare_networks(&baseline, &candidate, &sentences, &cfg, a.search.threads)?;
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Text => format!(
            "{} vs {} on {} sentences\n  identical   {} ({:.2}%)\n  mean edit distance {:.3} tokens\n  BLEU        {:.2}\n",
            report.candidate,
            report.baseline,
            report.sentences,
            report.identical,
            100.0 * report.identical_fraction,
            report.mean_edit_distance(),
            report.bleu
        ),
    };
    write_text(a.output.as_ref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

fn quantize_report(a: QuantizeReportArgs) -> Result<ExitCode> {
    let params = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let stats: Vec<QuantizationStats> = quantize_model(&params)?.stats;
    for s in &stats {
        if s.scale != scale_for(s.max_abs) || !s.within_bound() {
            bail!("tensor {} violates its quantization bound", s.name);
        }
    }
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&stats)? + "\n",
        Format::Text => {
            let mut s = format!(
                "{:<28} {:>10} {:>10} {:>10} {:>10}\n",
                "tensor", "max|w|", "scale", "rms err", "max err"
            );
            for t in &stats {
                s += &format!(
                    "{:<28} {:>10.6} {:>10.3} {:>10.3e} {:>10.3e}\n",
                    t.name, t.max_abs, t.scale, t.rms_error, t.max_error
                );
            }
            s
        }
    };
    write_text(a.output.as_ref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

fn bleu(a: BleuArgs) -> Result<ExitCode> {
    let split = |t: &str| -> Vec<Vec<String>> {
        t.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect()
    };
    let hyp = split(&read_text(Some(&a.input))?);
    let refs = split(&read_text(Some(&a.reference))?);
    let stats = corpus_stats(&hyp, &refs)?;
    let score = stats.score();
    let precisions: Vec<f64> = (1..=MAX_ORDER).map(|n| stats.precision(n)).collect();
    let body = match a.format {
        Format::Json => {
            serde_json::to_string_pretty(&json!({
                "bleu": score,
                "precisions": precisions,
                "brevity_penalty": stats.brevity_penalty(),
                "hypothesis_length": stats.hyp_len,
                "reference_length": stats.ref_len,
            }))? + "\n"
        }
        Format::Text => {
            let p: Vec<String> = precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
            format!(
                "BLEU = {score:.2}, {} (BP={:.3}, hyp_len={}, ref_len={})\n",
                p.join("/"),
                stats.brevity_penalty(),
                stats.hyp_len,
                stats.ref_len
            )
        }
    };
    write_text(a.output.as_ref(), &body)?;
    Ok(ExitCode::SUCCESS)
}

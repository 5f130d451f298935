//! Throughput measurement and phase profiling.
//!
//! Words are counted on the target side (emitted tokens, EOS excluded). WPS is
//! words per wall-clock second of a corpus pass; WPCS divides WPS by the number of
//! workers. Reported time is the median of an odd number of timed passes, taken
//! after one untimed warm-up pass. Timed passes run uninstrumented; phase shares
//! come from one extra profiled pass.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::decoder::{translate, DecodeConfig};
use crate::error::{Error, Result};
use crate::layers::{Network, Precision};
use crate::profile::{self, Phase, PhaseTimer};
use crate::qmath;

pub const DEFAULT_REPEATS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseShare {
    pub phase: Phase,
    pub seconds: f64,
    pub percent: f64,
}

/// Phase shares sorted by descending time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub total_seconds: f64,
    pub rows: Vec<PhaseShare>,
}

impl PhaseTable {
    pub fn from_timer(timer: &PhaseTimer) -> Self {
        let total = timer.total().as_secs_f64();
        if total == 0.0 {
            return Self::default();
        }
        let mut rows: Vec<PhaseShare> = timer
            .iter()
            .map(|(phase, d)| PhaseShare {
                phase,
                seconds: d.as_secs_f64(),
                percent: 100.0 * d.as_secs_f64() / total,
            })
            .collect();
        rows.sort_by(|a, b| b.seconds.total_cmp(&a.seconds).then(a.phase.cmp(&b.phase)));
        Self {
            total_seconds: total,
            rows,
        }
    }

    pub fn percent(&self, phase: Phase) -> f64 {
        self.rows.iter().find(|r| r.phase == phase).map_or(0.0, |r| r.percent)
    }

    pub fn top(&self) -> Option<Phase> {
        self.rows.first().map(|r| r.phase)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("    Time  Phase\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:>7.2}%  {}", r.percent, r.phase.name());
        }
        s
    }
}

/// Result of [`run_benchmark`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub precision: Precision,
    pub isa: String,
    pub sentences: usize,
    pub workers: usize,
    pub logical_cpus: usize,
    pub repeats: usize,
    pub target_words: usize,
    pub run_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub wps: f64,
    pub wpcs: f64,
    /// Wall time of the instrumented pass; its excess over the median is the
    /// instrumentation overhead.
    pub profiled_seconds: f64,
    pub phases: Vec<PhaseShare>,
}

impl BenchReport {
    pub fn phase_table(&self) -> PhaseTable {
        PhaseTable {
            total_seconds: self.phases.iter().map(|p| p.seconds).sum(),
            rows: self.phases.clone(),
        }
    }

    /// Relative slowdown of the instrumented pass against the median timed pass.
    pub fn instrumentation_overhead(&self) -> f64 {
        if self.median_seconds > 0.0 {
            self.profiled_seconds / self.median_seconds - 1.0
        } else {
            0.0
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} ({}): {} sentences, {} target words, {} worker(s), median of {} runs",
            self.precision, self.isa, self.sentences, self.target_words, self.workers, self.repeats
        );
        let _ = writeln!(
            s,
            "  median {:.4} s   WPS {:.2}   WPCS {:.2}",
            self.median_seconds, self.wps, self.wpcs
        );
        let _ = writeln!(
            s,
            "  profiled pass {:.4} s ({:+.1}% vs median)",
            self.profiled_seconds,
            self.instrumentation_overhead() * 100.0
        );
        s.push_str(&self.phase_table().to_text());
        s
    }
}

/// Both precisions side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedComparison {
    pub fp32: BenchReport,
    pub int8: BenchReport,
    /// `int8.wpcs / fp32.wpcs`.
    pub speed_ratio: f64,
}

impl SpeedComparison {
    pub fn new(fp32: BenchReport, int8: BenchReport) -> Self {
        let speed_ratio = if fp32.wpcs > 0.0 { int8.wpcs / fp32.wpcs } else { 0.0 };
        Self { fp32, int8, speed_ratio }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("System      WPCS\n");
        let _ = writeln!(s, "NMT fp32 {:>8.2}", self.fp32.wpcs);
        let _ = writeln!(s, "NMT int8 {:>8.2}", self.int8.wpcs);
        let _ = writeln!(s, "speed ratio int8/fp32: {:.2}x\n", self.speed_ratio);
        s.push_str(&self.fp32.to_text());
        s.push('\n');
        s.push_str(&self.int8.to_text());
        s
    }
}

struct Pass {
    elapsed: Duration,
    words: usize,
    timer: PhaseTimer,
}

/// One pass over the corpus with `workers` threads pulling sentences in order.
fn run_pass(models: &[&Network], sentences: &[Vec<u32>], cfg: &DecodeConfig, workers: usize, instrument: bool) -> Result<Pass> {
    let next = AtomicUsize::new(0);
    let words = AtomicUsize::new(0);
    let merged = Mutex::new(PhaseTimer::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let start = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                if instrument {
                    profile::install();
                }
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= sentences.len() {
                        break;
                    }
                    match translate(models, &sentences[i], cfg) {
                        Ok(t) => {
                            words.fetch_add(t.tokens.len(), Ordering::Relaxed);
                        }
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(Error::Sentence {
                                index: i,
                                source: Box::new(e),
                            });
                            next.store(sentences.len(), Ordering::Relaxed);
                        }
                    }
                }
                if instrument {
                    merged.lock().unwrap().merge(&profile::uninstall());
                }
            });
        }
    });
    let elapsed = start.elapsed();
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(Pass {
        elapsed,
        words: words.into_inner(),
        timer: merged.into_inner().unwrap(),
    })
}

/// Median of an odd-length sample: order statistic `(n + 1) / 2`.
pub fn median(times: &[f64]) -> f64 {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[sorted.len() / 2]
}

/// Translates the corpus `repeats` times and reports the median pass.
pub fn run_benchmark(
    models: &[&Network],
    sentences: &[Vec<u32>],
    cfg: &DecodeConfig,
    workers: usize,
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 || repeats % 2 == 0 {
        return Err(Error::Config(format!("repeats must be odd and at least 1, got {repeats}")));
    }
    if workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    if sentences.is_empty() {
        return Err(Error::EmptyInput("benchmark corpus"));
    }
    cfg.validate()?;

    run_pass(models, sentences, cfg, workers, false)?;
    let mut run_seconds = Vec::with_capacity(repeats);
    let mut target_words = 0;
    for _ in 0..repeats {
        let pass = run_pass(models, sentences, cfg, workers, false)?;
        run_seconds.push(pass.elapsed.as_secs_f64());
        target_words = pass.words;
    }
    let profiled = run_pass(models, sentences, cfg, workers, true)?;
    let median_seconds = median(&run_seconds);
    let wps = target_words as f64 / median_seconds;
    Ok(BenchReport {
        precision: cfg.precision,
        isa: qmath::detected_isa().name().to_string(),
        sentences: sentences.len(),
        workers,
        logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        repeats,
        target_words,
        run_seconds,
        median_seconds,
        wps,
        wpcs: wps / workers as f64,
        profiled_seconds: profiled.elapsed.as_secs_f64(),
        phases: PhaseTable::from_timer(&profiled.timer).rows,
    })
}

/// Phase shares of one instrumented single-worker pass.
pub fn profile_phases(models: &[&Network], sentences: &[Vec<u32>], cfg: &DecodeConfig) -> Result<PhaseTable> {
    if sentences.is_empty() {
        return Ok(PhaseTable::default());
    }
    cfg.validate()?;
    let pass = run_pass(models, sentences, cfg, 1, true)?;
    Ok(PhaseTable::from_timer(&pass.timer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_middle_order_statistic() {
        let t = [9.0, 1.0, 8.0, 2.0, 7.0, 3.0, 6.0, 4.0, 5.0];
        assert_eq!(median(&t), 5.0);
        assert_eq!(median(&[3.0]), 3.0);
    }

    #[test]
    fn empty_profile_is_empty() {
        let t = PhaseTable::from_timer(&PhaseTimer::new());
        assert!(t.rows.is_empty());
        assert_eq!(t.total_seconds, 0.0);
    }
}

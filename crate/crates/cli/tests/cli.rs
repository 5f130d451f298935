use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const DESK_BLEU_PINNED: f64 = 99.58;

fn qnmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnmt")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = qnmt(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn desk_model(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("desk{seed}.qnmt"));
    ok(&["genmodel", "--output", p(&path), "--seed", &seed.to_string()]);
    path
}

fn corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..n {
        let words: Vec<String> = (0..rng.gen_range(5..21)).map(|_| format!("w{:04}", rng.gen_range(1..98))).collect();
        text += &words.join(" ");
        text.push('\n');
    }
    let path = dir.join(format!("corpus{seed}.txt"));
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn genmodel_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.qnmt");
    let b = dir.path().join("b.qnmt");
    ok(&["genmodel", "--output", p(&a), "--seed", "9", "--hidden", "16"]);
    ok(&["genmodel", "--output", p(&b), "--seed", "9", "--hidden", "16"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(&fs::read(&a).unwrap()[..4], b"QNMT");
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 1);
    let input = dir.path().join("empty.txt");
    let output = dir.path().join("out.txt");
    fs::write(&input, "").unwrap();
    ok(&["translate", "--model", p(&model), "--input", p(&input), "--output", p(&output)]);
    assert_eq!(fs::read(&output).unwrap(), b"");
}

#[test]
fn translate_keeps_lines_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 1);
    let input = dir.path().join("in.txt");
    fs::write(&input, "w0003 w0004 w0005\n\nunknown words here\nw0042\n").unwrap();
    let run = |threads: &str| {
        ok(&[
            "translate", "--model", p(&model), "--input", p(&input), "--precision", "int8", "--beam", "3", "--threads", threads,
        ])
        .stdout
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().nth(1), Some(""));
}

#[test]
fn identical_ensemble_translates_like_one_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 2);
    let input = corpus(dir.path(), 5, 3);
    let one = ok(&["translate", "--model", p(&model), "--input", p(&input)]).stdout;
    let two = ok(&["translate", "--model", p(&model), "--model", p(&model), "--input", p(&input)]).stdout;
    assert_eq!(one, two);
}

#[test]
fn precisions_agree_on_desk_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 1);
    let input = corpus(dir.path(), 100, 1);
    let fp32 = dir.path().join("fp32.txt");
    let int8 = dir.path().join("int8.txt");
    ok(&["translate", "--model", p(&model), "--input", p(&input), "--output", p(&fp32)]);
    ok(&["translate", "--model", p(&model), "--input", p(&input), "--output", p(&int8), "--precision", "int8"]);
    assert_ne!(fs::read(&fp32).unwrap(), fs::read(&int8).unwrap());
    let out = ok(&["bleu", "--input", p(&int8), "--reference", p(&fp32), "--format", "json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let score = v["bleu"].as_f64().unwrap();
    assert!(score >= 95.0, "{score}");
    assert!(score >= DESK_BLEU_PINNED - 1.0, "{score} regressed from {DESK_BLEU_PINNED}");
}

#[test]
fn compare_same_precision_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 1);
    let input = corpus(dir.path(), 10, 4);
    let out = ok(&[
        "compare", "--model", p(&model), "--input", p(&input), "--precision", "int8", "--baseline", "int8", "--format", "json",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identical_fraction"], 1.0);
    assert_eq!(v["sentences"], 10);
    let text = String::from_utf8(ok(&["compare", "--model", p(&model), "--input", p(&input)]).stdout).unwrap();
    assert!(text.starts_with("int8 vs fp32 on 10 sentences"), "{text}");
}

#[test]
fn quantize_report_scales_match_definition() {
    let dir = tempfile::tempdir().unwrap();
    let model = desk_model(dir.path(), 5);
    let out = ok(&["quantize-report", "--model", p(&model), "--format", "json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    // Four GRUs with three weights each, three attention, four output, one init.
    assert_eq!(rows.len(), 20);
    for r in rows {
        let max = r["max_abs"].as_f64().unwrap() as f32;
        assert_eq!(r["scale"].as_f64().unwrap() as f32, 127.0 / max);
        assert!(r["max_error"].as_f64().unwrap() <= 0.5 / r["scale"].as_f64().unwrap() * (1.0 + 1e-9));
    }
}

#[test]
fn bench_json_schema_and_default_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("small.qnmt");
    ok(&["genmodel", "--output", p(&model), "--hidden", "8", "--embed", "8"]);
    let out = ok(&["bench", "--model", p(&model), "--sentences", "3", "--format", "json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["fp32", "int8"] {
        let r = &v[key];
        assert_eq!(r["precision"], key);
        assert_eq!(r["repeats"], 9);
        assert_eq!(r["run_seconds"].as_array().unwrap().len(), 9);
        assert_eq!(r["workers"], 1);
        let wps = r["wps"].as_f64().unwrap();
        assert_eq!(r["wpcs"].as_f64().unwrap(), wps);
        let words = r["target_words"].as_f64().unwrap();
        assert!((words / r["median_seconds"].as_f64().unwrap() - wps).abs() <= 1e-9 * wps);
        let total: f64 = r["phases"].as_array().unwrap().iter().map(|p| p["percent"].as_f64().unwrap()).sum();
        assert!(total <= 100.0 + 1e-9);
    }
    let ratio = v["speed_ratio"].as_f64().unwrap();
    assert!((ratio - v["int8"]["wpcs"].as_f64().unwrap() / v["fp32"]["wpcs"].as_f64().unwrap()).abs() < 1e-12);

    let text = String::from_utf8(ok(&["bench", "--model", p(&model), "--sentences", "2", "--repeats", "1"]).stdout).unwrap();
    assert!(text.contains("speed ratio int8/fp32:"), "{text}");

    let one = ok(&["bench", "--model", p(&model), "--sentences", "2", "--repeats", "3", "--precision", "int8", "--format", "json"]);
    let v: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(v["int8"]["repeats"], 3);
    assert!(v["speed_ratio"].is_null());
}

#[test]
fn bleu_cases() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        path
    };
    let score = |h: &Path, r: &Path| -> f64 {
        let out = ok(&["bleu", "--input", p(h), "--reference", p(r), "--format", "json"]);
        serde_json::from_slice::<Value>(&out.stdout).unwrap()["bleu"].as_f64().unwrap()
    };
    let reference = write("ref.txt", "the cat sat down\n");
    assert_eq!(score(&write("h1.txt", "the the the the\n"), &reference), 0.0);
    assert_eq!(score(&write("h2.txt", "\n"), &reference), 0.0);
    assert_eq!(score(&reference, &reference), 100.0);
    let out = qnmt(&["bleu", "--input", p(&write("h3.txt", "a\nb\n")), "--reference", p(&reference)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.qnmt");
    fs::write(&junk, b"not a model").unwrap();
    for args in [
        vec!["translate", "--model", p(&junk)],
        vec!["translate", "--model", "/nonexistent/m.qnmt"],
        vec!["translate"],
        vec!["translate", "--model", p(&junk), "--precision", "int4"],
        vec!["quantize-report", "--model", p(&junk)],
        vec!["genmodel", "--output", p(&junk), "--embed", "0"],
    ] {
        let out = qnmt(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let model = desk_model(dir.path(), 1);
    for args in [
        vec!["translate", "--model", p(&model), "--beam", "0"],
        vec!["bench", "--model", p(&model), "--repeats", "4"],
        vec!["translate", "--model", p(&model), "--threads", "0"],
    ] {
        assert_eq!(qnmt(&args).status.code(), Some(1), "{args:?}");
    }
}

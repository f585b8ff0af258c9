use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surfi_core::synth::{self, EventSpec};
use surfi_core::trace::{write_csi_trace, write_keypoint_trace, CsiFormat};

fn surfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfi")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Writes a pair to `dir` and returns the (video, csi) paths.
fn write_pair(dir: &Path, video_spec: &EventSpec, csi_spec: &EventSpec, seed: u64) -> (PathBuf, PathBuf) {
    let (video, csi, _) = if video_spec == csi_spec {
        synth::gen_matched_pair(csi_spec, seed).unwrap()
    } else {
        synth::gen_attack_pair(video_spec, csi_spec, seed).unwrap()
    };
    let vp = dir.join("video.jsonl");
    let cp = dir.join("csi.csv");
    write_keypoint_trace(File::create(&vp).unwrap(), &video).unwrap();
    write_csi_trace(File::create(&cp).unwrap(), &csi, CsiFormat::CsiCsv).unwrap();
    (vp, cp)
}

fn small_spec(freq: f64) -> EventSpec {
    EventSpec { csi_gain: vec![1.0, 2.0, 1.5, 0.7], ..EventSpec::new(freq, 8.0, 28.0) }
}

#[test]
fn detect_matched_pair_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(0.6);
    let (v, c) = write_pair(tmp.path(), &spec, &spec, 1);
    let out = surfi(&["detect", s(&v), s(&c)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    assert_eq!(report["decision"]["verdict"], "legitimate");
    assert!(!report["events"].as_array().unwrap().is_empty());
}

#[test]
fn detect_attack_pair_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let looped = EventSpec { t_start: 12.0, t_end: 33.0, ..small_spec(0.6) };
    let (v, c) = write_pair(tmp.path(), &looped, &small_spec(1.0), 2);
    let out = surfi(&["detect", s(&v), s(&c)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(stdout_json(&out)["decision"]["verdict"], "looped");
}

#[test]
fn aligned_attack_scores_two_and_needs_a_stricter_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let (v, c) = write_pair(tmp.path(), &small_spec(0.6), &small_spec(1.0), 2);
    let out = surfi(&["detect", s(&v), s(&c)]);
    let report = stdout_json(&out);
    assert_eq!(report["events"][0]["verdict"]["per_attribute"], serde_json::json!([1, 1, 0]));
    assert_eq!(out.status.code(), Some(0));

    let cfg = tmp.path().join("strict.json");
    fs::write(&cfg, r#"{"decision": {"threshold": 2.5}}"#).unwrap();
    let out = surfi(&["detect", s(&v), s(&c), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_writes_csv_report_to_out() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(1.0);
    let (v, c) = write_pair(tmp.path(), &spec, &spec, 3);
    let report = tmp.path().join("report.csv");
    let out = surfi(&["detect", s(&v), s(&c), "--format", "csv", "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("event,start_s,end_s"));
    assert!(text.lines().count() >= 2);
}

#[test]
fn detect_missing_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let out = surfi(&["detect", s(&missing), s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["path"], s(&missing));
}

#[test]
fn detect_malformed_trace_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(0.6);
    let (v, _) = write_pair(tmp.path(), &spec, &spec, 4);
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "t,a0\n0.0,1.0\n0.001,oops\n").unwrap();
    let out = surfi(&["detect", s(&v), s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["path"], s(&bad));
}

#[test]
fn bad_config_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(0.6);
    let (v, c) = write_pair(tmp.path(), &spec, &spec, 5);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"thresholds": {"t_start": -1.0, "t_end": 2.0, "t_freq": 0.0}}"#).unwrap();
    let out = surfi(&["detect", s(&v), s(&c), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let problems = stdout_json(&out)["error"]["problems"].as_array().unwrap().clone();
    assert_eq!(problems.len(), 2, "{problems:?}");
}

#[test]
fn bad_arguments_exit_one_not_two() {
    let out = surfi(&["detect", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_protocol_exits_one_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let protocol = tmp.path().join("p.json");
    fs::write(&protocol, r#"{"trials_per_type": 0, "gain_range": [3.0, 0.5]}"#).unwrap();
    let out = surfi(&["synth", "--protocol", s(&protocol), "--out", s(&tmp.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["path"], s(&protocol));
    let message = err["error"]["message"].as_str().unwrap();
    assert!(message.contains("trials_per_type") && message.contains("gain_range"), "{err}");

    fs::write(&protocol, r#"{"snr_db": "loud"}"#).unwrap();
    let out = surfi(&["synth", "--protocol", s(&protocol), "--out", s(&tmp.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_json(&out)["error"]["message"].as_str().unwrap().contains("line 1"));
}

#[test]
fn synth_requires_out() {
    let out = surfi(&["synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["kind"], "usage");
}

fn tiny_corpus(dir: &Path, seed: &str) -> PathBuf {
    let protocol = dir.join("protocol.json");
    fs::write(&protocol, r#"{"trials_per_type": 2, "csi_columns": 4}"#).unwrap();
    let corpus = dir.join(format!("corpus-{seed}"));
    let out = surfi(&["synth", "--protocol", s(&protocol), "--out", s(&corpus), "--seed", seed]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = stdout_json(&out);
    assert_eq!(summary["matched"], 6);
    assert_eq!(summary["attack"], 24);
    corpus
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny_corpus(tmp.path(), "8");
    let b = tmp.path().join("again");
    fs::rename(&a, &b).unwrap();
    let a = tiny_corpus(tmp.path(), "8");
    for name in ["manifest.jsonl", "corpus.json", "trials/0000_video.jsonl", "trials/0000_csi.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = tiny_corpus(tmp.path(), "9");
    assert_ne!(fs::read(a.join("trials/0000_csi.jsonl")).unwrap(), fs::read(c.join("trials/0000_csi.jsonl")).unwrap());
}

#[test]
fn calibrate_small_corpus_warns_and_rejects_zero_target() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(tmp.path(), "3");
    let out = Command::new(env!("CARGO_BIN_EXE_surfi"))
        .args(["calibrate", s(&corpus), "--target-fpr", "0.001"])
        .env("SURFI_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stderr).contains("only"), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_json(&out)["thresholds"].as_array().unwrap().clone();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r["threshold"].as_f64().unwrap() <= 3.0);
        assert!(r["empirical_fpr"].as_f64().unwrap() <= 0.001);
    }

    let zero = surfi(&["calibrate", s(&corpus), "--target-fpr", "0"]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn eval_on_single_label_corpus_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(tmp.path(), "4");
    let manifest = corpus.join("manifest.jsonl");
    let legit: String = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .filter(|l| l.contains(r#""label":"matched""#))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&manifest, legit).unwrap();
    let out = surfi(&["eval", s(&corpus), "--out", s(&tmp.path().join("eval"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

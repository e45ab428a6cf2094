use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const SUBCOMMANDS: [&str; 11] =
    ["ingest", "preprocess", "featurize", "train", "evaluate", "importance", "synth", "replay", "stream", "serve", "synth-stream"];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nocisense"));
    c.env_remove("NOCISENSE_DATA_DIR").env_remove("RUST_LOG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--data-dir").arg(dir).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}\nstdout: {}\nstderr: {}", text(&out.stdout), text(&out.stderr));
    out
}

/// `nocisense <version> <cmd>: manifest <64 hex> seed <n>`
fn header_of(stderr: &str, cmd: &str) -> (String, u64) {
    let line = stderr.lines().find(|l| l.starts_with("nocisense ")).unwrap_or_else(|| panic!("no header in {stderr}"));
    let rest = line.strip_prefix(&format!("nocisense {} {cmd}: manifest ", env!("CARGO_PKG_VERSION"))).expect(line);
    let (hash, seed) = rest.split_once(" seed ").unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    (hash.to_string(), seed.parse().unwrap())
}

fn small_synth(dir: &Path) -> PathBuf {
    ok(dir, &["synth", "--out", "synth.cache", "--subjects", "3", "--epochs-per-class", "6", "--epoch-seconds", "1"]);
    dir.join("synth.cache")
}

#[test]
fn help_and_version_exit_zero() {
    for args in [vec!["--help"], vec!["--version"]] {
        assert_eq!(bin().args(&args).output().unwrap().status.code(), Some(0));
    }
    for sub in SUBCOMMANDS {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{sub}: {}", text(&out.stderr));
        assert!(text(&out.stdout).contains("Usage: nocisense"));
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("Usage"));
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["train", "--no-such-flag"]).output().unwrap().status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_synth(d);
    let bad_hyper = run(d, &["evaluate", "--epochs", "synth.cache", "--hyper", "svm.c=lots"]);
    assert_eq!(bad_hyper.status.code(), Some(1), "{}", text(&bad_hyper.stderr));
    let bad_alg = run(d, &["evaluate", "--epochs", "synth.cache", "--algorithms", "svm_rbf,perceptron"]);
    assert_eq!(bad_alg.status.code(), Some(1));
    let bad_filter = run(d, &["preprocess", "--epochs", "synth.cache", "--out", "p.cache", "--highpass", "60"]);
    assert_eq!(bad_filter.status.code(), Some(1), "{}", text(&bad_filter.stderr));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = run(d, &["evaluate", "--features", "nowhere.feat"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).starts_with("error:"));
    std::fs::write(d.join("junk.cache"), b"not an epoch cache").unwrap();
    assert_eq!(run(d, &["featurize", "--epochs", "junk.cache", "--out", "f.feat"]).status.code(), Some(2));
}

#[test]
fn evaluate_on_a_synth_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_synth(d);
    let args = ["evaluate", "--epochs", "synth.cache", "--algorithms", "svm_rbf,knn", "--seed", "7", "--report-out", "report.json"];
    let out = ok(d, &args);
    let (hash, seed) = header_of(&text(&out.stderr), "evaluate");
    assert_eq!(seed, 7);
    let table = text(&out.stdout);
    assert!(table.contains("svm_rbf") && table.contains("knn"), "{table}");
    assert!(table.contains("Grade"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["manifest_hash"], hash.as_str());
    assert_eq!(report["algorithms"].as_array().unwrap().len(), 2);
    assert_eq!(report["n_subjects"], 3);

    // same inputs and seed, same predictions
    std::fs::rename(d.join("report.json"), d.join("first.json")).unwrap();
    ok(d, &args);
    let again: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    for k in 0..2 {
        assert_eq!(again["algorithms"][k]["predictions"], report["algorithms"][k]["predictions"]);
        assert_eq!(again["algorithms"][k]["metrics"], report["algorithms"][k]["metrics"]);
    }
}

#[test]
fn offline_chain_and_manifest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_synth(d);
    ok(d, &["preprocess", "--epochs", "synth.cache", "--out", "clean.cache", "--target-rate", "500", "--ptp-threshold", "400"]);
    let out = ok(d, &["featurize", "--epochs", "clean.cache", "--out", "f.feat", "--manifest-out", "manifest.txt"]);
    let (hash, _) = header_of(&text(&out.stderr), "featurize");
    let manifest = std::fs::read_to_string(d.join("manifest.txt")).unwrap();
    assert!(manifest.lines().count() >= 537);
    ok(d, &["train", "--features", "f.feat", "--algorithm", "lr", "--hyper", "lr.lambda=0.1", "--out", "m.model", "--profile", "offline"]);
    ok(d, &["importance", "--features", "f.feat", "--model", "m.model", "--repeats", "2", "--top", "5"]);

    // a 13-channel montage changes the manifest
    ok(d, &["featurize", "--write-config", "default.toml"]);
    let cfg = std::fs::read_to_string(d.join("default.toml")).unwrap();
    assert!(cfg.contains("\"O2\"]"));
    std::fs::write(d.join("thirteen.toml"), cfg.replace(", \"O2\"]", "]")).unwrap();
    let out = ok(d, &["featurize", "--epochs", "clean.cache", "--out", "g.feat", "--config", "thirteen.toml"]);
    let (other, _) = header_of(&text(&out.stderr), "featurize");
    assert_ne!(other, hash);

    let mismatch = run(d, &["train", "--features", "g.feat", "--out", "x.model", "--profile", "offline"]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(text(&mismatch.stderr).to_lowercase().contains("manifest"), "{}", text(&mismatch.stderr));
    let mismatch = run(d, &["importance", "--features", "g.feat", "--model", "m.model"]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(text(&mismatch.stderr).to_lowercase().contains("manifest"));
}

fn realtime_model(d: &Path) {
    ok(d, &["synth-stream", "--features-out", "stream.feat", "--train-subjects", "2", "--train-seconds", "24"]);
    ok(d, &["train", "--features", "stream.feat", "--algorithm", "lr", "--out", "rt.model", "--profile", "realtime"]);
}

#[test]
fn recorded_frames_stream_through_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    realtime_model(d);
    ok(d, &["synth-stream", "--subject", "5", "--duration", "5", "--speed", "0", "--out", "frames.bin"]);
    let out = ok(d, &["stream", "--file", "frames.bin", "--model", "rt.model", "--simulate", "--events", "events.jsonl"]);
    header_of(&text(&out.stderr), "stream");
    let events: Vec<Value> = std::fs::read_to_string(d.join("events.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let preds: Vec<&Value> = events.iter().filter(|e| e["type"] == "prediction").collect();
    assert!((39..=41).contains(&preds.len()), "{}", preds.len());
    for e in &preds {
        let p = e["p"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(e["latency_us"]["total"].as_u64().is_some());
        assert!(e["masked"].is_array() && e["flags"].is_array());
    }
}

#[test]
fn serve_publishes_and_echoes_controls() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    realtime_model(d);
    let mut child = bin()
        .arg("--data-dir")
        .arg(d)
        .args(["serve", "--model", "rt.model", "--publish", "127.0.0.1:0", "--wait-subscribers", "1", "--duration", "3"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "serve exited early");
        if let Some(a) = line.trim().strip_prefix("publishing on ") {
            break a.to_string();
        }
    };
    let stream = TcpStream::connect(&addr).unwrap();
    let mut w = stream.try_clone().unwrap();
    let mut r = BufReader::new(stream);
    let mut predictions = 0;
    let mut echoed = false;
    let mut line = String::new();
    while r.read_line(&mut line).unwrap() > 0 {
        let msg: Value = serde_json::from_str(&line).unwrap();
        match msg["type"].as_str().unwrap() {
            "prediction" => {
                predictions += 1;
                if predictions == 2 {
                    writeln!(w, r#"{{"type":"set_sustain","value":4}}"#).unwrap();
                }
                if echoed {
                    break;
                }
            }
            "control" => {
                assert_eq!(msg["sustain"], 4.0);
                echoed = true;
            }
            _ => {}
        }
        line.clear();
    }
    assert!(echoed);
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gag"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn gag")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gag(dir, args);
    assert!(
        out.status.success(),
        "gag {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_corpus(dir: &Path, seed: u64, sessions: usize) -> PathBuf {
    let log = format!("log{seed}.tsv");
    let corpus = format!("corpus{seed}.jsonl");
    ok(
        dir,
        &[
            "synth",
            "-o",
            &log,
            "--seed",
            &seed.to_string(),
            "--sessions",
            &sessions.to_string(),
        ],
    );
    ok(dir, &["ingest", &log, "-o", &corpus]);
    dir.join(corpus)
}

fn recall_at(path: &Path, k: &str) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["recall"][k].as_f64().unwrap()
        })
        .collect()
}

#[test]
fn run_twice_gives_identical_reports() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 1, 400);
    let corpus = corpus.to_str().unwrap();
    for out in ["a.jsonl", "b.jsonl"] {
        ok(
            dir.path(),
            &[
                "run",
                "--dataset",
                corpus,
                "--embed-dim",
                "8",
                "--seed",
                "7",
                "-o",
                out,
            ],
        );
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);
    assert!(dir.path().join("a.jsonl.manifest.json").exists());
}

#[test]
fn ingest_and_synth_are_deterministic() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["synth", "-o", "x.tsv", "--seed", "5", "--sessions", "300"],
    );
    ok(
        dir.path(),
        &["synth", "-o", "y.tsv", "--seed", "5", "--sessions", "300"],
    );
    assert_eq!(
        fs::read(dir.path().join("x.tsv")).unwrap(),
        fs::read(dir.path().join("y.tsv")).unwrap()
    );
    ok(dir.path(), &["ingest", "x.tsv", "-o", "c1.jsonl"]);
    ok(dir.path(), &["ingest", "x.tsv", "-o", "c2.jsonl"]);
    assert_eq!(
        fs::read(dir.path().join("c1.jsonl")).unwrap(),
        fs::read(dir.path().join("c2.jsonl")).unwrap()
    );
}

#[test]
fn manifest_replays_the_run() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 2, 300);
    let corpus = corpus.to_str().unwrap();
    ok(
        dir.path(),
        &[
            "run",
            "--dataset",
            corpus,
            "--embed-dim",
            "8",
            "--variant",
            "fix_new",
            "-o",
            "first.jsonl",
        ],
    );
    ok(
        dir.path(),
        &[
            "run",
            "--config",
            "first.jsonl.manifest.json",
            "-o",
            "again.jsonl",
        ],
    );
    assert_eq!(
        fs::read(dir.path().join("first.jsonl")).unwrap(),
        fs::read(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 3, 300);
    fs::write(
        dir.path().join("run.cfg"),
        format!(
            "dataset = {}\nembed_dim = 0  # invalid on purpose\nmethod = pop\n",
            corpus.display()
        ),
    )
    .unwrap();
    let out = gag(dir.path(), &["run", "--config", "run.cfg", "-o", "r.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    ok(
        dir.path(),
        &[
            "run",
            "--config",
            "run.cfg",
            "--embed-dim",
            "4",
            "-o",
            "r.jsonl",
        ],
    );
    assert_eq!(recall_at(&dir.path().join("r.jsonl"), "20").len(), 5);
}

#[test]
fn zero_embed_dim_is_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 4, 200);
    let out = gag(
        dir.path(),
        &[
            "run",
            "--dataset",
            corpus.to_str().unwrap(),
            "--embed-dim",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("embed_dim"));
}

#[test]
fn empty_log_reports_no_sessions() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.tsv"), "").unwrap();
    let out = gag(dir.path(), &["ingest", "empty.tsv", "-o", "c.jsonl"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sessions"));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = gag(dir.path(), &["ingest", "nope.tsv", "-o", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(gag(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        gag(dir.path(), &["run", "--embed-dim", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(gag(dir.path(), &["--help"]).status.code(), Some(0));
}

/// Reads the TSV back and counts post-split sessions holding an item absent
/// from the training portion.
fn novel_fraction(path: &Path, train_frac: f64) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let mut sessions: Vec<Vec<String>> = Vec::new();
    let mut last: Option<(String, i64)> = None;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (user, item, ts) = (
            cols[0].to_string(),
            cols[1].to_string(),
            cols[2].parse::<i64>().unwrap(),
        );
        let new_session = match &last {
            Some((u, t)) => *u != user || ts - t > 8 * 3600,
            None => true,
        };
        if new_session {
            sessions.push(Vec::new());
        }
        sessions.last_mut().unwrap().push(item);
        last = Some((user, ts));
    }
    let boundary = (sessions.len() as f64 * train_frac).floor() as usize;
    let train: HashSet<&String> = sessions[..boundary].iter().flatten().collect();
    let test = &sessions[boundary..];
    let novel = test
        .iter()
        .filter(|s| s.iter().any(|i| !train.contains(i)))
        .count();
    novel as f64 / test.len() as f64
}

#[test]
fn novel_rate_is_respected() {
    let dir = TempDir::new().unwrap();
    for seed in ["0", "1", "2"] {
        ok(
            dir.path(),
            &[
                "synth",
                "-o",
                "n.tsv",
                "--novel-rate",
                "0.05",
                "--seed",
                seed,
            ],
        );
        let frac = novel_fraction(&dir.path().join("n.tsv"), 0.6);
        assert!(
            (frac - 0.05).abs() <= 0.01,
            "seed {seed}: novel fraction {frac}"
        );
    }
}

#[test]
fn drift_changes_transitions() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "-o",
            "d.tsv",
            "--users",
            "50",
            "--items",
            "200",
            "--drift-at",
            "0.6",
        ],
    );
    let text = fs::read_to_string(dir.path().join("d.tsv")).unwrap();
    let rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    let cut = rows.len() * 6 / 10;
    let transitions = |rows: &[Vec<String>]| {
        let mut m: HashMap<(String, String), usize> = HashMap::new();
        for w in rows.windows(2) {
            if w[0][0] == w[1][0] {
                *m.entry((w[0][1].clone(), w[1][1].clone())).or_default() += 1;
            }
        }
        m
    };
    let before = transitions(&rows[..cut]);
    let after = transitions(&rows[cut..]);
    let shared = after.keys().filter(|k| before.contains_key(*k)).count();
    assert!(
        (shared as f64) < 0.5 * after.len() as f64,
        "{shared} of {} transitions reused",
        after.len()
    );
}

#[test]
fn train_then_run_from_checkpoint() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 6, 300);
    let corpus = corpus.to_str().unwrap();
    ok(
        dir.path(),
        &[
            "train",
            "--dataset",
            corpus,
            "--embed-dim",
            "8",
            "--offline-epochs",
            "2",
            "-o",
            "m.ckpt",
        ],
    );
    assert!(dir.path().join("m.ckpt.json").exists());
    ok(
        dir.path(),
        &[
            "run",
            "--dataset",
            corpus,
            "--embed-dim",
            "8",
            "--checkpoint",
            "m.ckpt",
            "-o",
            "r.jsonl",
        ],
    );
    let table = ok(dir.path(), &["report", "r.jsonl"]);
    assert!(
        table.contains("R@20") && table.lines().count() == 7,
        "{table}"
    );
}

#[test]
fn workers_flag_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let corpus = synth_corpus(dir.path(), 8, 300);
    let corpus = corpus.to_str().unwrap();
    ok(
        dir.path(),
        &[
            "--workers",
            "1",
            "run",
            "--dataset",
            corpus,
            "--embed-dim",
            "8",
            "-o",
            "one.jsonl",
        ],
    );
    ok(
        dir.path(),
        &[
            "--workers",
            "3",
            "run",
            "--dataset",
            corpus,
            "--embed-dim",
            "8",
            "-o",
            "three.jsonl",
        ],
    );
    assert_eq!(
        fs::read(dir.path().join("one.jsonl")).unwrap(),
        fs::read(dir.path().join("three.jsonl")).unwrap()
    );
}

#[test]
fn full_updates_beat_static_on_drift() {
    let dir = TempDir::new().unwrap();
    let (mut full, mut fixed) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let corpus = synth_corpus(dir.path(), seed, 1000);
        let corpus = corpus.to_str().unwrap();
        let s = seed.to_string();
        for (variant, acc) in [("full", &mut full), ("static", &mut fixed)] {
            let out = format!("{variant}{seed}.jsonl");
            ok(
                dir.path(),
                &[
                    "run",
                    "--dataset",
                    corpus,
                    "--embed-dim",
                    "16",
                    "--seed",
                    &s,
                    "--variant",
                    variant,
                    "-o",
                    &out,
                ],
            );
            *acc += recall_at(&dir.path().join(&out), "20")[4] / seeds as f64;
        }
    }
    assert!(full >= fixed, "full {full:.4} < static {fixed:.4}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adaptrl_core::episode::load_episodes_path;
use adaptrl_core::policy::Policy;
use serde_json::Value;

fn adaptrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptrl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = adaptrl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(path: &Path) -> Value {
    let mut p = path.as_os_str().to_os_string();
    p.push(".manifest.json");
    serde_json::from_slice(&fs::read(PathBuf::from(p)).unwrap()).unwrap()
}

#[test]
fn simulate_writes_requested_cohort_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "142", "--seed", "3", "--out", "a.jsonl"]);
    let report = load_episodes_path(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(report.episodes.len(), 142);
    assert!(report.diagnostics.is_empty());

    let m = manifest(&dir.path().join("a.jsonl"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seeds"]["master"], 3);
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_byte_identical_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "60", "--seed", "9", "--out", "a.jsonl", "--jobs", "1"]);
    ok(dir.path(), &["simulate", "--n", "60", "--seed", "9", "--out", "b.jsonl", "--jobs", "3"]);
    ok(dir.path(), &["simulate", "--n", "60", "--seed", "9", "--out", "c.jsonl"]);
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c.jsonl")).unwrap());
}

#[test]
fn missing_seed_is_generated_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["simulate", "--n", "4", "--out", "a.jsonl"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let m = manifest(&dir.path().join("a.jsonl"));
    let seed = m["seeds"]["master"].as_u64().unwrap();
    assert!(stderr.contains(&seed.to_string()), "{stderr}");

    // the recorded seed reproduces the file
    ok(dir.path(), &["simulate", "--n", "4", "--seed", &seed.to_string(), "--out", "b.jsonl"]);
    assert_eq!(
        fs::read(dir.path().join("a.jsonl")).unwrap(),
        fs::read(dir.path().join("b.jsonl")).unwrap()
    );
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = adaptrl(dir.path(), &["simulate", "--n", "5", "--model", "missing.toml", "--out", "a.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
    assert!(!dir.path().join("a.jsonl").exists());

    let out = adaptrl(dir.path(), &["simulate", "--design", "eval7", "--n", "5", "--out", "a.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = adaptrl(dir.path(), &["train", "--episodes", "none.jsonl", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = adaptrl(dir.path(), &["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn commands_do_not_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "20", "--seed", "1", "--out", "a.jsonl"]);
    let before = fs::read(dir.path().join("a.jsonl")).unwrap();
    let out = adaptrl(dir.path(), &["train", "--episodes", "a.jsonl", "--out", "a.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read(dir.path().join("a.jsonl")).unwrap(), before);
}

#[test]
fn train_records_objective_presets() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "142", "--seed", "5", "--out", "a.jsonl"]);
    for (objective, lambda, gamma) in [("accuracy", 0.0, 0.0), ("learning", 1.0, 0.99), ("combined", 0.5, 0.0)] {
        let out = format!("{objective}.json");
        ok(dir.path(), &["train", "--episodes", "a.jsonl", "--objective", objective, "--out", &out]);
        let p = Policy::load(dir.path().join(&out)).unwrap();
        let spec = p.objective.unwrap();
        assert_eq!((spec.lambda, spec.gamma), (lambda, gamma), "{objective}");
        let m = manifest(&dir.path().join(&out));
        assert_eq!(m["settings"]["lambda"], lambda);
        assert_eq!(m["settings"]["gamma"], gamma);
        assert_eq!(m["settings"]["sweeps"], 200);
    }
    ok(dir.path(), &[
        "train", "--episodes", "a.jsonl", "--objective", "custom", "--lambda", "0.25", "--gamma", "0.5", "--out", "c.json",
    ]);
    let out = adaptrl(dir.path(), &["train", "--episodes", "a.jsonl", "--objective", "custom", "--out", "d.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dist_of_sxai_is_all_recommendation() {
    let dir = tempfile::tempdir().unwrap();
    Policy::constant(adaptrl_core::mdp::Action::RecommendationAndExplanation, "sxai")
        .save(dir.path().join("sxai.json"))
        .unwrap();
    let out = ok(dir.path(), &["analyze", "dist", "--policy", "sxai.json"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "all\t0\t64\t0\t0\t64");

    // a constant policy leaves three actions unused in both halves
    let out = adaptrl(dir.path(), &["analyze", "chi2", "--policy", "sxai.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn randtest_reports_p_value_and_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "142", "--seed", "11", "--out", "a.jsonl"]);
    let args = |out: &'static str, jobs: &'static str| {
        vec![
            "analyze", "randtest", "--episodes", "a.jsonl", "--objective", "learning", "--resamples", "200", "--seed", "4",
            "--out", out, "--jobs", jobs,
        ]
    };
    ok(dir.path(), &args("r1.json", "1"));
    ok(dir.path(), &args("r2.json", "4"));
    let r1 = fs::read(dir.path().join("r1.json")).unwrap();
    assert_eq!(r1, fs::read(dir.path().join("r2.json")).unwrap());
    let v: Value = serde_json::from_slice(&r1).unwrap();
    let p = v["result"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(v["result"]["excluded"].as_u64().unwrap() <= 200);
    assert_eq!(v["result"]["chi2_null"].as_array().unwrap().len(), 200);
}

#[test]
fn evaluate_runs_the_six_condition_roster() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "142", "--seed", "2", "--out", "a.jsonl"]);
    for o in ["accuracy", "learning", "combined"] {
        ok(dir.path(), &["train", "--episodes", "a.jsonl", "--objective", o, "--out", &format!("{o}.json")]);
    }
    ok(dir.path(), &[
        "analyze", "evaluate", "--design", "eval2", "--n", "20", "--resamples", "200", "--seed", "8",
        "--condition", "sxai",
        "--condition", "explanation=explanation_only",
        "--condition", "random",
        "--condition", "accuracy.json",
        "--condition", "learning.json",
        "--condition", "combined.json",
        "--reference", "accuracy",
        "--out", "eval.tsv",
    ]);
    let table = fs::read_to_string(dir.path().join("eval.tsv")).unwrap();
    let mut roster: Vec<&str> = table.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(roster.len(), 12);
    roster.sort();
    roster.dedup();
    assert_eq!(roster, ["accuracy", "combined", "explanation", "learning", "random", "sxai"]);
    let contrasts = fs::read_to_string(dir.path().join("eval.contrasts.tsv")).unwrap();
    assert_eq!(contrasts.lines().count(), 1 + 5 * 2);
    let m = manifest(&dir.path().join("eval.tsv"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn corr_reports_interval() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "80", "--seed", "6", "--out", "a.jsonl"]);
    let out = ok(dir.path(), &["analyze", "corr", "--episodes", "a.jsonl", "--x", "immediate", "--y", "post", "--seed", "1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = &v["correlation"];
    let r = c["r"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&r));
    assert!(c["ci_low"].as_f64().unwrap() <= c["ci_high"].as_f64().unwrap());
}

#[test]
fn validate_flags_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "5", "--seed", "1", "--out", "a.jsonl"]);
    ok(dir.path(), &["validate", "--episodes", "a.jsonl"]);

    let mut text = fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    text.push_str("{not json}\n");
    fs::write(dir.path().join("bad.jsonl"), text).unwrap();
    let out = adaptrl(dir.path(), &["validate", "--episodes", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    let sample = concat!(env!("CARGO_MANIFEST_DIR"), "/../../content/sample_pack.json");
    let out = adaptrl(dir.path(), &["validate", "--pack", sample, "--design", "eval1"]);
    assert_eq!(out.status.code(), Some(2));
    ok(dir.path(), &["content", "--seed", "4", "--size", "48", "--out", "pack.json"]);
    ok(dir.path(), &["validate", "--pack", "pack.json", "--design", "eval1"]);
}

#[test]
fn content_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["content", "--seed", "4", "--out", "a.json"]);
    ok(dir.path(), &["content", "--seed", "4", "--out", "b.json"]);
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
    let out = adaptrl(dir.path(), &["content", "--seed", "4", "--size", "12", "--out", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
}

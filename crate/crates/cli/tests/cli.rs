use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_growthlab"));
    c.env_remove("GROWTHLAB_SEED");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    repo().join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Drops the fields allowed to differ between reruns.
fn normalized(mut v: Value) -> Value {
    let inv = v["invocation"].as_object_mut().unwrap();
    inv.remove("wall_time_s");
    inv.remove("workers");
    v
}

#[test]
fn smoke_config_exits_zero_with_zero_tv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", config("smoke.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("report.json"));
    for n in r["per_n"].as_array().unwrap() {
        assert_eq!(n["calibration"]["tv_bound"], 0.0);
    }
}

#[test]
fn incompatible_coupling_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = read_json(&config("smoke.json"));
    c["coupling"]["kind"] = "max".into();
    let path = dir.path().join("bad.json");
    fs::write(&path, c.to_string()).unwrap();
    let o = run(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coupling"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn model_flag_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", config("smoke.json").to_str().unwrap(), "--model", "lpp", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn golden_file_matches() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", config("golden.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = normalized(read_json(&dir.path().join("report.json")));
    let want = normalized(read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/golden.report.json")));
    assert_eq!(got, want);
}

#[test]
fn reports_do_not_depend_on_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("golden.json");
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let o = run(&["run", cfg.to_str().unwrap(), "--workers", w, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let ra = normalized(read_json(&a.path().join("report.json")));
    let rb = normalized(read_json(&b.path().join("report.json")));
    assert_eq!(ra, rb);
    let la = fs::read_to_string(a.path().join("replicas.jsonl")).unwrap();
    let lb = fs::read_to_string(b.path().join("replicas.jsonl")).unwrap();
    assert_eq!(la.lines().skip(1).collect::<Vec<_>>(), lb.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn seed_flag_and_env_override_config() {
    let cfg = config("smoke.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--seed", "99", "--out", a.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = bin()
        .env("GROWTHLAB_SEED", "99")
        .args(["run", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let ra = normalized(read_json(&a.path().join("report.json")));
    assert_eq!(ra["config"]["seed"], 99);
    assert_eq!(ra, normalized(read_json(&b.path().join("report.json"))));
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", config("golden.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let echo = read_json(&dir.path().join("report.json"))["config"].clone();
    let path = dir.path().join("echo.json");
    fs::write(&path, echo.to_string()).unwrap();
    let again = tempfile::tempdir().unwrap();
    let o = run(&["run", path.to_str().unwrap(), "--out", again.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&again.path().join("report.json"))["config"], echo);
}

#[test]
fn every_output_embeds_the_invocation() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        config("golden.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
        "--plot",
    ]);
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("report.json"));
    let outputs: Vec<String> =
        r["invocation"]["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(outputs.len(), 6);
    for name in &outputs {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.contains("\"command\":\"run\"") || text.contains("\"command\": \"run\""), "{name}");
    }
    let svg = fs::read_to_string(dir.path().join("widths.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn check_law_reports() {
    let o = run(&["check-law", r#"{"kind":"exponential","params":{"rate":1.0}}"#]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for k in ["nondegenerate", "passes_undirected", "passes_directed_bond", "passes_directed_site"] {
        assert_eq!(v[k], true, "{k}");
    }
    let o = run(&["check-law", r#"{"kind":"bernoulli-two-point","params":{"a":0,"b":1,"p":0.6}}"#]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passes_undirected"], false);

    let o = run(&["check-law", r#"{"kind":"exponential","params":{"rate":1.0"#]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("law"));
    let o = run(&["check-law", r#"{"kind":"uniform","params":{"lo":2,"hi":1}}"#]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("params."));
}

#[test]
fn check_law_csv() {
    let o = run(&["check-law", "--format", "csv", r#"{"kind":"geometric","params":{"p":0.3}}"#]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# invocation: "));
    assert!(text.contains("field,value"));
}

#[test]
fn oracle_tables_pass() {
    for args in [
        &["oracle", "lpp", "--size", "6", "--seeds", "50"][..],
        &["oracle", "polymer", "--size", "10", "--beta", "2", "--seeds", "3"][..],
        &["oracle", "fpp", "--size", "2", "--seeds", "3"][..],
    ] {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}");
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["failed"], 0);
        assert!(v["passed"].as_u64().unwrap() > 0);
    }
    assert_eq!(code(&run(&["oracle", "fpp", "--size", "3"])), 2);
    assert_eq!(code(&run(&["oracle", "polymer", "--size", "13"])), 2);
}

#[test]
fn merge_and_scaling() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = tempfile::tempdir().unwrap();
    let cfg = config("golden.json");
    run(&["run", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    run(&["run", cfg.to_str().unwrap(), "--seed", "5", "--out", b.path().to_str().unwrap()]);
    let o = run(&["report-merge", a.path().to_str().unwrap(), b.path().to_str().unwrap(), "--out", m.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&m.path().join("report.json"));
    assert_eq!(r["replicas"], 1200);
    assert_eq!(r["config"]["replicas"], 400);
    let lines = fs::read_to_string(m.path().join("replicas.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1201);

    let o = run(&["scaling", m.path().join("report.json").to_str().unwrap(), "--stat", "variance"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["fit"]["points"], 3);
    assert!(v["fit"]["r2"].as_f64().unwrap() <= 1.0);

    // a smoke run has α = 0, so the mean gain is identically zero
    let s = tempfile::tempdir().unwrap();
    let mut c = read_json(&config("smoke.json"));
    c["n_list"] = serde_json::json!([4, 8, 16]);
    let path = s.path().join("c.json");
    fs::write(&path, c.to_string()).unwrap();
    run(&["run", path.to_str().unwrap(), "--out", s.path().to_str().unwrap()]);
    let o = run(&["scaling", s.path().join("report.json").to_str().unwrap(), "--stat", "mean-delta", "--fit", "sqrt-log"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zero variance"));
}

#[test]
fn merge_rejects_different_configs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = tempfile::tempdir().unwrap();
    run(&["run", config("golden.json").to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    run(&["run", config("smoke.json").to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    let o = run(&["report-merge", a.path().to_str().unwrap(), b.path().to_str().unwrap(), "--out", m.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn dump_env_is_seeded() {
    let law = r#"{"kind":"uniform","params":{"lo":0,"hi":1}}"#;
    let a = run(&["dump-env", law, "--radius", "2", "--seed", "3"]);
    let b = run(&["dump-env", law, "--radius", "2", "--seed", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    // the radius-2 ball has 13 vertices and 16 edges
    assert_eq!(v["edges"].as_array().unwrap().len(), 16);
}

#[test]
fn help_and_manual_cover_every_subcommand() {
    let o = run(&["--help"]);
    let help = String::from_utf8(o.stdout).unwrap();
    let man = fs::read_to_string(repo().join("docs/growthlab.1")).unwrap();
    for word in ["check-law", "run", "oracle", "scaling", "report-merge", "dump-env"] {
        assert!(help.contains(word), "help lacks {word}");
        assert!(man.contains(word), "manual lacks {word}");
    }
    for flag in ["--seed", "--workers", "--out", "--format", "--plot", "GROWTHLAB_SEED"] {
        assert!(man.contains(&flag.replace('-', "\\-")) || man.contains(flag), "manual lacks {flag}");
    }
}

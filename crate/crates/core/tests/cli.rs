use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use ummu_core::cli::{RunConfig, DISABLED_LABEL};
use ummu_core::tgraph::load_events;

const SMALL: &str = "\
# quick run
synth.n_src = 40
synth.n_dst = 25
synth.n_events = 1500
synth.feature_dim = 6
train.embed_dim = 8
train.epochs = 2
train.batch_size = 100
eval.n_buckets = 5
";

fn ummu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ummu")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = ummu(args);
    assert!(
        out.status.success(),
        "ummu {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup(dir: &Path) -> String {
    let cfg = dir.join("small.conf");
    std::fs::write(&cfg, SMALL).unwrap();
    cfg.display().to_string()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn synth_round_trips_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let start = Instant::now();
    ok(&["synth", "--seed", "42", "--csv", csv.to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let stream = load_events(&csv).unwrap();
    assert_eq!(stream.len(), 20_000);
    assert_eq!(stream.feature_dim(), 16);
    let sidecar: serde_json::Value = serde_json::from_slice(&read(dir.path().join("s.json"))).unwrap();
    assert_eq!(sidecar["spec"]["seed"], 42);
}

#[test]
fn zero_epochs_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("run");
    ok(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "train.epochs=0"]);
    let log: serde_json::Value = serde_json::from_slice(&read(out.join("training_log.json"))).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 0);
    assert!(log["best_epoch"].is_null());
    assert!(out.join("checkpoint.bin").exists());
}

#[test]
fn train_eval_is_deterministic_and_well_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        ok(&["train", "--config", &cfg, "--seed", "3", "--out", o]);
        let ck = out.join("checkpoint.bin");
        ok(&["eval", "--config", &cfg, "--seed", "3", "--out", o, "--checkpoint", ck.to_str().unwrap()]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["training_log.json", "checkpoint.bin", "eval_report.json", "eval_buckets.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
    }
    let report: serde_json::Value = serde_json::from_slice(&read(a.join("eval_report.json"))).unwrap();
    assert_eq!(report["k_neg"], 50);
    assert_eq!(report["seed"], 3);
    assert_eq!(report["per_bucket"].as_array().unwrap().len(), 5);
    assert_eq!(report["config"]["train"]["embed_dim"], 8);
    let csv = String::from_utf8(read(a.join("eval_buckets.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 + 1);
    let n: usize = report["per_bucket"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["n_events"].as_u64().unwrap() as usize)
        .sum();
    assert_eq!(n, report["n_events"].as_u64().unwrap() as usize);
}

#[test]
fn eval_ignores_augmentation_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("m");
    let o = out.to_str().unwrap();
    ok(&["train", "--config", &cfg, "--out", o]);
    let ck = out.join("checkpoint.bin");
    let metrics = |extra: &[&str]| {
        let mut args = vec!["eval", "--config", &cfg, "--out", o, "--checkpoint", ck.to_str().unwrap()];
        args.extend_from_slice(extra);
        ok(&args);
        let r: serde_json::Value = serde_json::from_slice(&read(out.join("eval_report.json"))).unwrap();
        (r["ap"].clone(), r["mrr"].clone(), r["per_bucket"].clone())
    };
    let base = metrics(&[]);
    assert_eq!(base, metrics(&["--override", "ummu.alpha=0.3", "--override", "ummu.apply_prob=0.2"]));
    assert_eq!(base, metrics(&["--override", "ummu.variant=no_m", "--override", "ummu.enabled=false"]));
}

#[test]
fn incompatible_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    ok(&["train", "--config", &cfg, "--out", o, "--override", "train.epochs=0"]);
    let ck = out.join("checkpoint.bin");
    let res = ummu(&[
        "eval", "--config", &cfg, "--out", o, "--checkpoint", ck.to_str().unwrap(), "--override", "train.embed_dim=9",
    ]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("incompatible checkpoint"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn bad_configuration_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "train.embed_dims = 4\n").unwrap();
    let res = ummu(&["train", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("unknown key"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
    assert!(!dir.path().join("training_log.json").exists());

    let res = ummu(&["train", "--out", dir.path().to_str().unwrap(), "--override", "data.path=/nonexistent/x.csv"]);
    assert!(!res.status.success());
}

#[test]
fn flags_and_overrides_beat_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "seed = 5\ntrain.dropout = 0.2\nout = from_file\n").unwrap();
    let args = ummu_core::cli::CommonArgs {
        config: Some(cfg),
        seed: Some(9),
        out: Some(dir.path().join("flag")),
        overrides: vec!["train.dropout=0.3".into()],
    };
    let c: RunConfig = args.resolve().unwrap();
    assert_eq!(c.seed, 9);
    assert_eq!(c.train.dropout, 0.3);
    assert_eq!(c.out, dir.path().join("flag"));
}

#[test]
fn ablation_table_has_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("abl");
    let o = out.to_str().unwrap();
    ok(&["ablate", "--config", &cfg, "--out", o, "--override", "train.epochs=1"]);
    let table = String::from_utf8(read(out.join("ablation_table.csv"))).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6);
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["UmmU", "w/o U", "w/o mmU", "w/o m", DISABLED_LABEL]);
    assert!(lines[0].starts_with("variant,label,ap,mrr,ap_b0,mrr_b0"));
    for l in &lines[1..] {
        assert!(l.split(',').skip(2).all(|v| v.is_empty() || v.parse::<f64>().unwrap().is_finite()));
    }
    let first = read(out.join("ablation_table.csv"));
    ok(&["ablate", "--config", &cfg, "--out", o, "--override", "train.epochs=1"]);
    assert_eq!(first, read(out.join("ablation_table.csv")));
}

use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

use ttp::checkpoint;
use ttp::config::KeyValues;
use ttp::experiment::{
    load_data, metric_rows, run_experiment, ExperimentConfig, CERTIFICATE_FILE, CHECKPOINT_FILE,
    HISTORY_FILE, METRICS_FILE, SPLIT_FILE,
};
use ttp::records;
use ttp_core::data::Split;
use ttp_core::ModelSpec;

const BLOBS: &str = "data.blobs.classes = 3
data.blobs.per_class = 40
data.blobs.dim = 4
data.blobs.spread = 1.5
model.kind = logreg
forget.count = 8
pareto.theta = 0.6
pretrain.epochs = 5
optimizer.epochs = 4
";

fn config(out: &Path, seed: u64, extra: &str) -> ExperimentConfig {
    let text = format!("seed = {seed}\noutput = {}\n{BLOBS}{extra}", out.display());
    ExperimentConfig::from_kv(KeyValues::parse(&text).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_experiment(&config(a.path(), 3, "pipeline = alg1\n")).unwrap();
    run_experiment(&config(b.path(), 3, "pipeline = alg1\n")).unwrap();
    for file in [METRICS_FILE, HISTORY_FILE, SPLIT_FILE, CHECKPOINT_FILE] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
    let c = TempDir::new().unwrap();
    run_experiment(&config(c.path(), 4, "pipeline = alg1\n")).unwrap();
    assert_ne!(
        fs::read(a.path().join(CHECKPOINT_FILE)).unwrap(),
        fs::read(c.path().join(CHECKPOINT_FILE)).unwrap()
    );
}

#[test]
fn pretrain_writes_no_certificate() {
    let out = TempDir::new().unwrap();
    let report = run_experiment(&config(out.path(), 1, "pipeline = pretrain\n")).unwrap();
    assert!(report.certificate.is_none() && report.history.is_none());
    assert!(!out.path().join(CERTIFICATE_FILE).exists());
    assert!(!out.path().join(HISTORY_FILE).exists());
    assert!(out.path().join(METRICS_FILE).exists());
}

#[test]
fn emitted_files_read_back() {
    let out = TempDir::new().unwrap();
    let extra = "pipeline = alg3\npareto.lambda = 5\npareto.c_bound = 10\nbudget.sigma = 0.01\ncert.j_bound = 5000\ncert.n = 500\n";
    let cfg = config(out.path(), 2, extra);
    let report = run_experiment(&cfg).unwrap();
    let dir = out.path();

    assert_eq!(
        records::read_metrics(&dir.join(METRICS_FILE)).unwrap(),
        report.metrics
    );
    assert_eq!(
        records::read_history(&dir.join(HISTORY_FILE)).unwrap(),
        report.history.as_ref().unwrap().rows
    );
    // ε and δ are NaN under a σ override, so compare the rendered pairs
    let cert = records::read_certificate(&dir.join(CERTIFICATE_FILE)).unwrap();
    assert_eq!(
        cert.to_pairs(),
        report.certificate.as_ref().unwrap().to_pairs()
    );
    assert!(cert.epsilon.is_nan() && cert.sigma_override);
    let w = checkpoint::load(&dir.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(w, report.weights);

    // the persisted split and checkpoint reproduce the metric rows
    let (forget, retain) = records::read_split(&dir.join(SPLIT_FILE)).unwrap();
    let (train, test) = load_data(&cfg).unwrap();
    let split = Split::new(train, forget, retain).unwrap();
    let spec = ModelSpec::LogReg { d: 4, k: 3 };
    assert_eq!(
        metric_rows(&spec, &w, &split, &test).unwrap(),
        report.metrics
    );
}

#[test]
fn errors_name_the_stage() {
    let out = TempDir::new().unwrap();
    // certified paths need a norm bound
    let err = run_experiment(&config(out.path(), 1, "pipeline = alg2\n")).unwrap_err();
    assert!(
        format!("{err:#}").contains("stage `certify-exact`"),
        "{err:#}"
    );
}

#[test]
fn binary_reports_failures_through_the_exit_status() {
    let out = TempDir::new().unwrap();
    let cfg = out.path().join("run.cfg");
    fs::write(&cfg, BLOBS).unwrap();
    let bin = env!("CARGO_BIN_EXE_ttp");
    let ok = Command::new(bin)
        .args(["pretrain", "--seed", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(out.path().join("pre"))
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.path().join("pre").join(METRICS_FILE).exists());

    let bad = Command::new(bin)
        .args(["finetune", "--seed", "1", "--config"])
        .arg(&cfg)
        .args(["--set", "pareto.thta=0.5"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("pareto.thta"));

    let bounds = Command::new(bin)
        .args([
            "bounds",
            "--theta",
            "0.75",
            "--retain-count",
            "100",
            "--classes",
            "10",
        ])
        .output()
        .unwrap();
    assert!(
        bounds.status.success(),
        "{}",
        String::from_utf8_lossy(&bounds.stderr)
    );
}

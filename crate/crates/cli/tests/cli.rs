use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_hjm");

const VASICEK: &str = r#"
n_paths = 128
seed = 9
commands = ["simulate", "verify-drift", "check-monotonicity", "realize-affine", "martingale-test"]

[grid]
dt = 0.02
dxi = 0.02
horizon_t = 0.4
horizon_xi = 3.0

[model]
m = 2
spots = [1.0, 1.0, 1.1]
lambda = [0.2]

[[model.curves]]
kind = "flat"
value = 0.02

[[model.curves]]
kind = "flat"
value = 0.04

[[model.curves]]
kind = "flat"
value = 0.03

[model.vol]
kind = "vasicek"
c = [0.01, 0.01, 0.01]
delta = [-0.5, -0.5, -0.5]

[simulate]
maturities = [1.0, 2.0]
record_every = 5
export_curves = true
curve_stride = 25
export_paths = 2

[verify-drift]
n_times = 4
n_maturities = 4
samples = 2

[monotonicity]
samples = 20

[martingale]
maturities = [1.0]
times = [0.2, 0.4]
"#;

fn hjm(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("scenario.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = hjm(a.path(), VASICEK, &["run", "--threads", "1"]);
    let ob = hjm(b.path(), VASICEK, &["run", "--threads", "3"]);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(oa.stdout, ob.stdout);
    let fa = files(&a.path().join("out"));
    let fb = files(&b.path().join("out"));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs between thread counts");
    }
    assert!(fa.contains_key("simulate.curves.csv"));
}

#[test]
fn seed_override_changes_paths_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    hjm(a.path(), VASICEK, &["simulate"]);
    hjm(b.path(), VASICEK, &["simulate", "--seed", "10"]);
    let fa = files(&a.path().join("out"));
    let fb = files(&b.path().join("out"));
    assert_ne!(fa["simulate.paths.csv"], fb["simulate.paths.csv"]);
    let ma = json(&a.path().join("out/manifest.json"));
    let mb = json(&b.path().join("out/manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(mb["seed"], 10);
}

#[test]
fn curve_table_layout() {
    let d = tempfile::tempdir().unwrap();
    let o = hjm(d.path(), VASICEK, &["simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(d.path().join("out/simulate.curves.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,t,index,xi,value"));
    let paths: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(paths.into_iter().collect::<Vec<_>>(), ["0", "1"]);
    let report = json(&d.path().join("out/simulate.json"));
    assert_eq!(report["status"], "pass");
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn broken_drift_fails_the_martingale_test() {
    let d = tempfile::tempdir().unwrap();
    let cfg = VASICEK
        .replace("n_paths = 128", "n_paths = 2000")
        .replace("lambda = [0.2]", "mode = \"risk-neutral\"\ndrift_perturbation = 0.05");
    let good = hjm(d.path(), &cfg.replace("drift_perturbation = 0.05", ""), &["martingale-test"]);
    assert_eq!(good.status.code(), Some(0), "{}", String::from_utf8_lossy(&good.stdout));
    let o = hjm(d.path(), &cfg, &["martingale-test"]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&d.path().join("out/martingale-test.json"));
    assert_eq!(r["status"], "fail");
    assert!(!r["result"]["failing"].as_array().unwrap().is_empty());
    let s = json(&d.path().join("out/summary.json"));
    assert_eq!(s["failing"][0], "martingale-test");
}

#[test]
fn verify_drift_passes_on_a_consistent_model() {
    let d = tempfile::tempdir().unwrap();
    let o = hjm(d.path(), VASICEK, &["verify-drift"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&d.path().join("out/verify-drift.json"));
    assert!(r["result"]["max_residual"].as_f64().unwrap() < 1e-6);
    let csv = fs::read_to_string(d.path().join("out/verify-drift.residuals.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,maturity,index,residual"));
    assert_eq!(csv.lines().count(), 1 + 4 * 4 * 3);
}

#[test]
fn cone_failure_carries_a_counterexample() {
    let d = tempfile::tempdir().unwrap();
    let cfg = VASICEK.replace("c = [0.01, 0.01, 0.01]", "c = [0.01, 0.015, 0.03]");
    let o = hjm(d.path(), &cfg, &["check-monotonicity"]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&d.path().join("out/check-monotonicity.json"));
    let conds = r["result"]["coefficients"]["conditions"].as_array().unwrap();
    let failed: Vec<&Value> = conds.iter().filter(|c| c["pass"] == false).collect();
    assert!(!failed.is_empty());
    let cx = &failed[0]["counterexample"];
    assert!(cx["i"].is_u64() && cx["j"].is_u64() && cx["xi_star"].is_f64(), "{cx}");
}

#[test]
fn empty_run_writes_an_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = VASICEK.replacen(
        "commands = [\"simulate\", \"verify-drift\", \"check-monotonicity\", \"realize-affine\", \"martingale-test\"]",
        "commands = []",
        1,
    );
    let o = hjm(d.path(), &cfg, &["run"]);
    assert_eq!(o.status.code(), Some(0));
    let m = json(&d.path().join("out/manifest.json"));
    assert_eq!(m["commands"].as_array().unwrap().len(), 0);
    assert_eq!(files(&d.path().join("out")).keys().collect::<Vec<_>>(), ["manifest.json"]);
}

#[test]
fn bad_configs_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let o = hjm(d.path(), &VASICEK.replace("dxi = 0.02", "dxi = 0.01"), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(o.stderr.split(|b| *b == b'\n').rfind(|l| !l.is_empty()).unwrap()).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["issues"][0]["line"], 8);
    assert!(err["issues"][0]["reason"].as_str().unwrap().contains("grid contract violated"));

    let o = hjm(d.path(), &VASICEK.replace("c = [0.01, 0.01, 0.01]", "c = [0.01]"), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.vol.c"));

    let o = Command::new(BIN).args(["simulate", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use sarme::pipeline::{self, ErrorSource, FitRequest, WeightsFormat, WeightsInput};
use sarme::simgen::{fit_estimator, preset, simulate_dataset, Estimator};
use sarme::{DistanceScheme, Method};
use serde_json::Value;

fn sarme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sarme"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Exports one dataset of a preset through the CLI and returns its directory.
fn export(dir: &Path, name: &str, setting: usize) -> PathBuf {
    let out = dir.join(name);
    let ids = format!("{setting},0");
    let o = sarme(&[
        "simulate",
        "--preset",
        name,
        "--seed",
        "20240101",
        "--output",
        s(&out),
        "--export-dataset",
        &ids,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn estimates(v: &Value) -> Vec<f64> {
    v["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["estimate"].as_f64().unwrap())
        .collect()
}

#[test]
fn fit_without_error_prone_columns_is_uncorrected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = export(tmp.path(), "smoke", 0);
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
    ]);
    let v = json(&o);
    assert_eq!(v["correction"], "none");
    assert_eq!(v["se"], "sandwich");
    assert_eq!(v["schema"], 1);
    assert_eq!(v["estimates"].as_array().unwrap().len(), 6);
}

#[test]
fn cli_report_matches_the_library_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let d = export(tmp.path(), "paper-fig1", 0);
    let req = FitRequest {
        outcome: d.join("outcome.csv"),
        covariates: d.join("covariates.csv"),
        weights: WeightsInput {
            path: d.join("weights.csv"),
            format: WeightsFormat::Dense,
            scheme: DistanceScheme::Knn { k: 10 },
        },
        error_prone: vec!["u1".into(), "u2".into()],
        source: ErrorSource::Delta(d.join("delta.csv")),
        rho_interval: None,
        method: Method::Brent,
    };
    let lib = pipeline::run_fit(&req).unwrap().to_json();
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
        "--error-prone",
        "u1,u2",
        "--delta",
        s(&d.join("delta.csv")),
    ]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout.clone()).unwrap(), lib);
    let v = json(&o);
    assert_eq!(v["correction"], "known");

    // The CSV round trip is exact, so the estimates equal a direct fit.
    let cfg = preset("paper-fig1").unwrap();
    let direct =
        fit_estimator(&simulate_dataset(&cfg, 0, 0).unwrap(), Estimator::Corrected).unwrap();
    for (a, b) in estimates(&v).iter().zip(direct.estimate.iter()) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn replicates_give_inflated_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = export(tmp.path(), "replicates", 0);
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
        "--error-prone",
        "u1,u2",
        "--replicates",
        s(&d.join("replicates.csv")),
    ]);
    let v = json(&o);
    assert_eq!(v["correction"], "replicates");
    assert_eq!(v["se"], "inflated");
    let names: Vec<&str> = v["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(&names[..2], &["u1", "u2"]);
}

#[test]
fn latent_positions_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let d = export(tmp.path(), "paper-homophily", 0);
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
        "--latent",
        s(&d.join("latent_uhat.csv")),
        "--latent-cov",
        s(&d.join("latent_delta.csv")),
    ]);
    let v = json(&o);
    assert_eq!(v["correction"], "latent");
}

#[test]
fn validation_sample_calibrates_the_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = export(tmp.path(), "paper-fig1", 0);
    let cfg = preset("paper-fig1").unwrap();
    let data = simulate_dataset(&cfg, 0, 0).unwrap();
    let mut text = String::from("true_u1,true_u2,proxy_u1,proxy_u2\n");
    for i in 0..40 {
        let (t, p) = (data.x_true.row(i), data.x_observed.row(i));
        text.push_str(&format!("{:?},{:?},{:?},{:?}\n", t[0], t[1], p[0], p[1]));
    }
    let val = d.join("validation.csv");
    std::fs::write(&val, text).unwrap();
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
        "--error-prone",
        "u1,u2",
        "--validation",
        s(&val),
    ]);
    assert_eq!(json(&o)["correction"], "validation");
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&d.join("outcome.csv")),
        "--covariates",
        s(&d.join("covariates.csv")),
        "--weights",
        s(&d.join("weights.csv")),
        "--error-prone",
        "u1,u2",
        "--validation",
        s(&val),
        "--proxy-bias",
    ]);
    assert_eq!(json(&o)["correction"], "proxy");
}

#[test]
fn smoke_preset_runs_quickly_and_writes_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let start = Instant::now();
    let o = sarme(&[
        "--threads",
        "1",
        "simulate",
        "--preset",
        "smoke",
        "--seed",
        "7",
        "--output",
        s(&out),
        "--raw",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("estimator,n,tau,parameter,metric,value\n"));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert!(out.join("raw.csv").exists());

    let again = tmp.path().join("again");
    let o = sarme(&[
        "--threads",
        "4",
        "simulate",
        "--preset",
        "smoke",
        "--seed",
        "7",
        "--output",
        s(&again),
        "--raw",
    ]);
    assert!(o.status.success());
    assert_eq!(
        csv,
        std::fs::read_to_string(again.join("summary.csv")).unwrap()
    );
}

#[test]
fn simulate_requires_a_seed() {
    let o = sarme(&["simulate", "--preset", "smoke"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_presets_names_every_bundled_config() {
    let o = sarme(&["simulate", "--list-presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "paper-fig1",
        "paper-tau",
        "paper-homophily",
        "replicates",
        "smoke",
    ] {
        assert!(text.lines().any(|l| l == name), "{name}");
    }
}

#[test]
fn invalid_config_exits_with_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(
        &cfg,
        preset("smoke")
            .unwrap()
            .to_json()
            .replace("\"schema\": 1", "\"schema\": 9"),
    )
    .unwrap();
    let o = sarme(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--output",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["schema"], 1);
    assert!(err["error"]["kind"].is_string());
}

fn complete_graph(dir: &Path, n: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if i == j { "0" } else { "1" }).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let p = dir.join("complete.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn embed_writes_positions_and_rejects_rank_deficiency() {
    let tmp = tempfile::tempdir().unwrap();
    let w = complete_graph(tmp.path(), 8);
    let prefix = tmp.path().join("emb");
    let o = sarme(&[
        "embed",
        "--weights",
        s(&w),
        "--dim",
        "1",
        "--output",
        s(&prefix),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let u = std::fs::read_to_string(tmp.path().join("emb_uhat.csv")).unwrap();
    let values: Vec<f64> = u.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 8);
    // Top eigenvalue 7 with a flat eigenvector: every entry is √(7/8).
    for v in values {
        assert!((v - (7.0f64 / 8.0).sqrt()).abs() < 1e-12);
    }
    assert!(tmp.path().join("emb_delta.csv").exists());

    let o = sarme(&[
        "embed",
        "--weights",
        s(&w),
        "--dim",
        "2",
        "--output",
        s(&prefix),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("rank"));
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&missing),
        "--covariates",
        s(&missing),
        "--weights",
        s(&missing),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let garbage = tmp.path().join("garbage.csv");
    std::fs::write(&garbage, "y\n1\nx\n").unwrap();
    let o = sarme(&[
        "fit",
        "--outcome",
        s(&garbage),
        "--covariates",
        s(&garbage),
        "--weights",
        s(&garbage),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sarme(&["fit", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

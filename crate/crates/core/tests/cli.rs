mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use zeno_core::cli_io::parse_model;

fn zeno(args: &[&str], env_tol: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zeno"));
    cmd.args(args).env_remove("ZENO_TOL");
    if let Some(t) = env_tol {
        cmd.env("ZENO_TOL", t);
    }
    cmd.output().expect("run zeno")
}

fn model(name: &str) -> String {
    models_dir().join(name).to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FIXTURES: [&str; 3] = ["kerr_qubit.model", "alkali.model", "lambda_system.model"];

#[test]
fn fixtures_round_trip_exactly() {
    for name in FIXTURES {
        let doc = parse_model(&fs::read_to_string(model(name)).unwrap()).unwrap();
        let again = parse_model(&doc.to_canonical_string()).unwrap();
        assert_eq!(doc.operator_table(), again.operator_table(), "{name}");
        assert_eq!(doc.family(), again.family(), "{name}");
        assert_eq!(doc.to_canonical_string(), again.to_canonical_string());
    }
}

#[test]
fn fixtures_pass_check() {
    let dir = tempfile::tempdir().unwrap();
    for name in FIXTURES {
        let out = dir.path().join(format!("{name}.json"));
        let o = zeno(&["check", &model(name), "--out", s(&out)], None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["zenofiable"], true);
        assert!(report["scaling_residual"].as_f64().unwrap() < 1e-9);
        assert!(report["kernel_leak"].as_f64().unwrap() < 1e-9);
        assert!(report["decoupling_residual"].as_f64().unwrap() < 1e-9);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{name}.json.manifest.json"))).unwrap()).unwrap();
        let doc = parse_model(&fs::read_to_string(model(name)).unwrap()).unwrap();
        assert_eq!(manifest["input_digest"], zeno_core::cli_io::output::digest(&doc.to_canonical_string()));
        assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn broken_model_exits_with_scaling_violation() {
    let path = data_dir().join("broken.model");
    let o = zeno(&["check", s(&path)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ScalingViolation"));
    let dir = tempfile::tempdir().unwrap();
    let o = zeno(&["eliminate", s(&path), "--out", s(&dir.path().join("z.json"))], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_parse_errors_exit_one() {
    assert_eq!(zeno(&["bogus"], None).status.code(), Some(1));
    assert_eq!(zeno(&["check"], None).status.code(), Some(1));
    assert_eq!(zeno(&["check", "/nonexistent.model"], None).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    fs::write(&bad, "[spaces]\nq = qubit\n[family]\nchannels = 1\n").unwrap();
    let o = zeno(&["check", s(&bad)], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.model:3:1") && err.contains("L1[0]"), "{err}");
    assert_eq!(zeno(&["check", &model("kerr_qubit.model")], Some("nonsense")).status.code(), Some(1));
}

#[test]
fn tolerance_override_precedence() {
    // A tolerance below the Λ fixture's round-off residuals makes it fail.
    let lambda = model("lambda_system.model");
    assert_eq!(zeno(&["check", &lambda], Some("1e-30")).status.code(), Some(2));
    assert_eq!(zeno(&["check", &lambda, "--tol", "1e-9"], Some("1e-30")).status.code(), Some(0));
    assert_eq!(zeno(&["check", &lambda, "--tol", "1e-30"], None).status.code(), Some(2));
}

#[test]
fn trajectory_artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, seed: &str| {
        let out = dir.path().join(tag);
        let o = zeno(
            &["traj", &model("kerr_qubit.model"), "--scheme", "counting", "--seed", seed, "--n", "3", "--t-end", "0.2", "--out", s(&out)],
            None,
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "5");
    let b = run("b", "5");
    for file in ["traj_0000.csv", "traj_0002.csv", "mean.csv"] {
        let x = fs::read(a.join(file)).unwrap();
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file}");
    }
    let header = fs::read_to_string(a.join("traj_0000.csv")).unwrap();
    assert!(header.starts_with("time,jump,innovation,rho_0_0_re,rho_0_0_im"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([5, 6, 7]));

    let h = dir.path().join("h");
    let o = zeno(&["traj", &model("kerr_qubit.model"), "--scheme", "homodyne", "--seed", "1", "--n", "2", "--t-end", "0.1", "--out", s(&h)], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(h.join("traj_0001.csv")).unwrap().starts_with("time,dY,innovation,"));
}

#[test]
fn evolve_full_and_zeno_models() {
    let dir = tempfile::tempdir().unwrap();
    let zeno_csv = dir.path().join("zeno.csv");
    let o = zeno(&["evolve", &model("alkali.model"), "--t-end", "0.5", "--dt", "0.01", "--initial", "mixed", "--out", s(&zeno_csv)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&zeno_csv).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 1 + 2 * 4);

    let full_csv = dir.path().join("full.csv");
    let o = zeno(
        &["evolve", &model("alkali.model"), "--model", "full", "--k", "3", "--t-end", "0.5", "--initial", "zeno:0", "--stride", "100", "--out", s(&full_csv)],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&full_csv).unwrap().starts_with("time,rho_0_0_re"));
    assert!(dir.path().join("full.csv.manifest.json").exists());

    let o = zeno(&["evolve", &model("alkali.model"), "--model", "full", "--out", s(&full_csv)], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn converge_and_linstab_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let conv = dir.path().join("conv.csv");
    let o = zeno(&["converge", &model("kerr_qubit.model"), "--ks", "2,5", "--t-end", "0.5", "--initial", "basis:1", "--out", s(&conv)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&conv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "k,trace_distance,leaked_population,dt");
    assert_eq!(rows.len(), 3);

    let stab = dir.path().join("stab.csv");
    let gammas = models_dir().join("gamma_example.json");
    let o = zeno(&["linstab", s(&gammas), "--ks", "1,10,100", "--out", s(&stab)], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["agrees"], true);
    assert_eq!(fs::read_to_string(&stab).unwrap().lines().count(), 4);
}

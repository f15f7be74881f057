use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn enet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enet")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON output")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn chain(dir: &TempDir, profile: &str, n: usize) -> String {
    let p = dir.path().join(format!("{}-{n}.txt", profile.replace(':', "_")));
    let path = p.to_str().unwrap().to_string();
    let out = enet(&["gen", profile, &n.to_string(), "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn validate_reports_violations() {
    let dir = TempDir::new().unwrap();
    let ok = write(&dir, "ok.txt", "0 1 1.0\n1 2 1.0\n");
    assert_eq!(json(&enet(&["validate", &ok]))["ok"], true);

    let split = write(&dir, "split.txt", "0 1 1\n2 3 1\n");
    let out = enet(&["validate", &split]);
    assert_eq!(code(&out), 2);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], false);
    assert!(v["violations"].to_string().contains("disconnected"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&enet(&["validate", "/nonexistent/net.txt"])), 1);
    let looped = write(&dir, "loop.txt", "0 0 1.0\n");
    assert_eq!(code(&enet(&["distance", &looped, "0", "0"])), 2);
    let dup = write(&dir, "dup.txt", "0 1 1.0\n0 1 2.0\n");
    assert_eq!(code(&enet(&["distance", &dup, "0", "1"])), 2);
    assert_eq!(code(&enet(&["gen", "geometric:0.5", "5"])), 4);
    assert_eq!(code(&enet(&["defect", "unit", "--n", "5"])), 4);
    assert_eq!(code(&enet(&["frobnicate"])), 2);
    let u = chain(&dir, "unit", 5);
    assert_eq!(code(&enet(&["distance", &u, "0", "99"])), 2);
}

#[test]
fn resistance_examples() {
    let dir = TempDir::new().unwrap();
    let u = chain(&dir, "unit", 6);
    assert_eq!(json(&enet(&["distance", &u, "0", "5"]))["distance"], 5.0);
    let g = chain(&dir, "geometric:2", 8);
    let d = json(&enet(&["distance", &g, "3", "4"]))["distance"].as_f64().unwrap();
    assert!((d - 0.125).abs() < 1e-14);
}

#[test]
fn dipole_increments() {
    let dir = TempDir::new().unwrap();
    let g = chain(&dir, "geometric:2", 4);
    let v = json(&enet(&["dipole", &g, "3", "0"]));
    let vals: Vec<f64> = v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let inc: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    assert_eq!(inc, vec![1.0, 0.5, 0.25]);
}

#[test]
fn single_edge_spectrum() {
    let dir = TempDir::new().unwrap();
    let e = write(&dir, "edge.txt", "0 1 1.0\n");
    let v = json(&enet(&["spectrum", &e, "--which", "l2"]));
    assert_eq!(v["eigenvalues"], serde_json::json!([1.0]));
    let cmp = json(&enet(&["spectrum", &e]));
    assert_eq!(cmp["matched"], true);
}

#[test]
fn trace_comparison() {
    let dir = TempDir::new().unwrap();
    let (u, g) = (chain(&dir, "unit", 30), chain(&dir, "geometric:2", 30));
    let v = json(&enet(&["compare", &u, &g, "--suite", "trace"]));
    let t = v["trace"].as_f64().unwrap();
    assert!((t - (2.0 - 2f64.powi(-28))).abs() < 1e-9);
    assert_eq!(v["limit"], 2.0);
}

#[test]
fn comparison_suites_pass() {
    let dir = TempDir::new().unwrap();
    let (u, g) = (chain(&dir, "unit", 12), chain(&dir, "geometric:2", 12));
    for suite in ["dipole", "intertwine", "harmonic"] {
        let v = json(&enet(&["compare", &u, &g, "--suite", suite]));
        assert_eq!(v["ok"], true, "{suite}: {v}");
    }
    let csv = enet(&["compare", &u, &g, "--suite", "domination", "--format", "csv"]);
    assert!(csv.status.success());
    assert!(String::from_utf8(csv.stdout).unwrap().starts_with("a,b,mu_C,mu_A,flag"));
    // reversed order breaks c ≤ c_A
    assert_eq!(code(&enet(&["compare", &g, &u])), 4);
}

#[test]
fn defect_plateau() {
    let g = json(&enet(&["defect", "geometric:2", "--n", "200"]));
    assert_eq!(g["plateau"], true);
    let u = json(&enet(&["defect", "unit", "--n", "200"]));
    assert_eq!(u["plateau"], false);
}

#[test]
fn harmonic_ramp() {
    let dir = TempDir::new().unwrap();
    let u = chain(&dir, "unit", 6);
    let b = write(&dir, "b.json", r#"{"0": 0, "5": 1}"#);
    let v = json(&enet(&["harmonic", &u, &b]));
    let vals: Vec<f64> = v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (k, x) in vals.iter().enumerate() {
        assert!((x - k as f64 / 5.0).abs() < 1e-12);
    }
    assert!((v["energy"].as_f64().unwrap() - 0.2).abs() < 1e-12);
}

#[test]
fn two_sided_generation_is_symmetric() {
    let v = json(&enet(&["gen", "two_sided_geometric:2", "9"]));
    let edges = v["edges"].as_array().unwrap();
    let c = |k: usize| edges[k][2].as_f64().unwrap();
    for k in 0..edges.len() {
        assert_eq!(c(k), c(edges.len() - 1 - k));
    }
}

#[test]
fn output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let net = chain(&dir, "linear", 10);
    let args = ["frame", net.as_str(), "--seed", "42"];
    assert_eq!(enet(&args).stdout, enet(&args).stdout);
    let args = ["measure", net.as_str(), "--which", "energy", "--seed", "3"];
    assert_eq!(enet(&args).stdout, enet(&args).stdout);
}

#[test]
fn laplacian_exports() {
    let dir = TempDir::new().unwrap();
    let u = chain(&dir, "unit", 3);
    let mm = enet(&["laplacian", &u]);
    assert!(String::from_utf8(mm.stdout).unwrap().starts_with("%%MatrixMarket"));
    let out = dir.path().join("lap.csv");
    let res = enet(&["laplacian", &u, "--dense", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(Path::new(&out).exists());
}

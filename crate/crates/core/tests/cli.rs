use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lyocert"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().arg("--deterministic").args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn cfg(rel: &str) -> String {
    configs().join(rel).to_string_lossy().into_owned()
}

#[test]
fn axioms_exit_codes() {
    let ok = run(&["axioms", "catalogue:scalar_stable"]);
    assert_eq!(code(&ok), 0);
    let bad = run(&["axioms", "catalogue:broken_cocycle_demo"]);
    assert_eq!(code(&bad), 1);
    let report = json(&bad);
    assert_eq!(report["status"], "Refuted");
    assert!(report.to_string().contains("witness"));
}

#[test]
fn every_shipped_system_config_loads() {
    let mut seen = 0;
    for entry in fs::read_dir(configs().join("systems")).unwrap() {
        let path = entry.unwrap().path();
        let out = run(&["axioms", path.to_str().unwrap()]);
        let want = if path.ends_with("broken_cocycle_demo.json") { 1 } else { 0 };
        assert_eq!(code(&out), want, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn certify_supported_and_refuted() {
    let ugas = run(&[
        "certify",
        &cfg("systems/scalar_stable.json"),
        "--property",
        "UGAS",
        "--plan",
        &cfg("plans/ugas_exponential.json"),
    ]);
    assert_eq!(code(&ugas), 0);
    assert_eq!(json(&ugas)["status"], "Supported");

    let ugwa = run(&["certify", "catalogue:scalar_unstable", "--property", "ugwa"]);
    assert_eq!(code(&ugwa), 1);
    let r = json(&ugwa);
    assert_eq!(r["property"], "UGWA");
    assert!(r["evidence"]["witness"]["state"].is_array());
}

#[test]
fn bounded_weight_iugs_without_attractivity() {
    let plan = cfg("plans/iugs_bounded_weight.json");
    let iugs = run(&["certify", "catalogue:scalar_unstable", "--property", "iUGS", "--plan", &plan]);
    assert_eq!(code(&iugs), 0);
    let ugatt = run(&["certify", "catalogue:scalar_unstable", "--property", "UGATT", "--beta", "r*exp(-t)"]);
    assert_eq!(code(&ugatt), 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["axioms", "/definitely/missing.json"])), 2);
    assert_eq!(code(&run(&["certify", "catalogue:scalar_stable", "--property", "XYZ"])), 2);
    // iUGS without ψ
    assert_eq!(code(&run(&["certify", "catalogue:scalar_stable", "--property", "iUGS"])), 2);
    assert_eq!(code(&run(&["axioms", "catalogue:no_such_system"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ \"dimension\": 1, ").unwrap();
    let out = run(&["axioms", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn timestamps_only_without_deterministic() {
    let det = run(&["axioms", "catalogue:scalar_stable"]);
    assert!(json(&det).get("generated_at").is_none());
    let live = bin().args(["axioms", "catalogue:scalar_stable"]).output().unwrap();
    let v: Value = serde_json::from_slice(&live.stdout).unwrap();
    assert!(v.get("generated_at").is_some());
}

#[test]
fn thread_count_does_not_change_reports() {
    let args = ["--deterministic", "certify", "catalogue:switched_2d", "--property", "iUGS", "--psi", "3*r"];
    let one = bin().env("LYOCERT_THREADS", "1").args(args).output().unwrap();
    let four = bin().env("LYOCERT_THREADS", "4").args(args).output().unwrap();
    assert_ne!(code(&one), 2, "{}", String::from_utf8_lossy(&one.stderr));
    assert!(!one.stdout.is_empty());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn lyap_construct_values() {
    let dir = tempfile::tempdir().unwrap();
    let levels = dir.path().join("levels.csv");
    let out = run(&["lyap", "catalogue:scalar_stable", "--construct", "--levels", levels.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["property"], "NCLF");
    let at = |x: f64| {
        r["values"]
            .as_array()
            .unwrap()
            .iter()
            .find(|v| v["x"][0].as_f64() == Some(x))
            .and_then(|v| v["value"].as_f64())
            .unwrap()
    };
    assert!((at(2.0) - (2f64.ln() + 1.0)).abs() < 1e-6);
    assert!((at(0.5) - 0.5).abs() < 1e-9);
    let csv = fs::read_to_string(levels).unwrap();
    assert!(csv.lines().count() > 10);
}

#[test]
fn lyap_rejects_unbounded_rho() {
    let out = run(&["lyap", "catalogue:scalar_stable", "--construct", "--rho", "r"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("K∞"));
}

#[test]
fn lyap_verify_outcomes() {
    let quad = cfg("lyapunov/quadratic.json");
    let stable = run(&["lyap", "catalogue:scalar_stable", "--verify", &quad, "--alpha", "2*r^2"]);
    assert_eq!(code(&stable), 0);
    let unstable = run(&["lyap", "catalogue:scalar_unstable", "--verify", &quad]);
    assert_eq!(code(&unstable), 1);
    let infinite = run(&[
        "lyap",
        "catalogue:bilinear",
        "--verify",
        &cfg("lyapunov/constructed.json"),
        "--plan",
        &cfg("plans/lyapunov_small.json"),
    ]);
    assert_eq!(code(&infinite), 1);
    assert_eq!(json(&infinite)["status"], "Refuted");
}

#[test]
fn coercive_bound_promotes_to_clf() {
    let out = run(&[
        "lyap",
        "catalogue:scalar_stable",
        "--verify",
        &cfg("lyapunov/quadratic.json"),
        "--alpha",
        "2*r^2",
        "--psi1",
        "0.5*r^2",
        "--psi2",
        "2*r^2",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["property"], "CLF");
}

#[test]
fn klfit_from_decay_feeds_certify() {
    let dir = tempfile::tempdir().unwrap();
    let beta = dir.path().join("beta.json");
    let out = run(&["klfit", "--from-decay", "catalogue:scalar_stable", "--out", beta.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&beta).unwrap();
    let ugas = run(&["certify", "catalogue:scalar_stable", "--property", "UGAS", "--beta", &text]);
    assert_eq!(code(&ugas), 0, "{}", String::from_utf8_lossy(&ugas.stderr));
}

#[test]
fn klfit_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("psi.csv");
    let mut body = String::from("r,t,psi\n");
    for k in -4..=4 {
        let r = 2f64.powi(k);
        for m in 0..=10 {
            let t = m as f64;
            body.push_str(&format!("{r},{t},{}\n", r * (-t).exp()));
        }
    }
    fs::write(&csv, body).unwrap();
    let out = run(&["klfit", "--psi", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["status"], "Supported");
}

#[test]
fn infer_closure_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("lattice.dot");
    let out = run(&["infer", "--assume", "NCLF", "--dot", dot.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let closure: Vec<String> = serde_json::from_value(json(&out)["closure"].clone()).unwrap();
    for p in ["UGWA", "iUGS", "iUGAS", "iREP", "NCLF"] {
        assert!(closure.iter().any(|c| c == p), "{p} missing from {closure:?}");
    }
    let graph = fs::read_to_string(dot).unwrap();
    assert!(graph.starts_with("digraph"));
    let nodes = graph.lines().filter(|l| l.trim_start().starts_with('"') && !l.contains("->")).count();
    assert_eq!(nodes, 17);
    assert_eq!(code(&run(&["infer", "--assume", "NOPE"])), 2);
}

#[test]
fn infer_reports_contradictions_from_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let plan = cfg("plans/iugs_bounded_weight.json");
    let iugs = dir.path().join("iugs.json");
    let ugwa = dir.path().join("ugwa.json");
    let a = run(&["certify", "catalogue:scalar_unstable", "--property", "iUGS", "--plan", &plan, "--out", iugs.to_str().unwrap()]);
    assert_eq!(code(&a), 0);
    let b = run(&["certify", "catalogue:scalar_unstable", "--property", "UGWA", "--out", ugwa.to_str().unwrap()]);
    assert_eq!(code(&b), 1);
    let out = run(&["infer", "--certs", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let r = json(&out);
    let c = &r["contradictions"][0];
    assert_eq!(c["property"], "UGWA");
    assert!(c["guidance"].to_string().contains("class K"));
}

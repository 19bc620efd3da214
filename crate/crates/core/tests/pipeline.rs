//! End-to-end runs through the experiment runner and the artifact files.

use inelastic_core::config::{Method, RunConfig};
use inelastic_core::counterexample::{build_phi, curves, CounterexampleSpec};
use inelastic_core::io::{read_csv, write_clock_csv, write_curves_csv, write_json, write_trace_csv, CURVES_HEADER, TRACE_HEADER};
use inelastic_core::runner;

#[test]
fn clock_identity_report_at_default_step() {
    let cfg = RunConfig::default();
    let r = runner::lemma1(&cfg).unwrap();
    assert!(r.pass);
    assert_eq!(r.result.residuals.len(), 100);
    assert!(r.result.max_residual <= 2e-3);
}

#[test]
fn recovered_w_from_the_integrator_is_brownian() {
    let cfg = RunConfig { dt: 1e-4, paths: 40, method: Method::Sde, ..RunConfig::default() };
    let r = runner::bm(&cfg).unwrap();
    assert!(r.result.pass_rate >= 0.9, "{}", r.result.pass_rate);
}

#[test]
fn construction_b_is_brownian_on_the_clock() {
    let cfg = RunConfig { dt: 1e-4, paths: 40, ..RunConfig::default() };
    let r = runner::bm(&cfg).unwrap();
    assert!(r.result.pass_rate >= 0.9, "{}", r.result.pass_rate);
}

#[test]
fn trace_and_clock_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { seed: 7, ..RunConfig::default() };
    for name in ["a.csv", "b.csv"] {
        let s = runner::construction_clock(&cfg, 0, cfg.t_max, cfg.dt).unwrap();
        write_clock_csv(&dir.path().join(name), &s).unwrap();
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let tr = runner::sde_trace(&cfg, 0, cfg.dt).unwrap();
    write_trace_csv(&dir.path().join("t.csv"), &tr).unwrap();
    let (h, rows) = read_csv(&dir.path().join("t.csv")).unwrap();
    assert_eq!(h, TRACE_HEADER);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[4], tr.b.at(k));
        assert_eq!(row[2], row[4] + row[3]);
    }
}

#[test]
fn counterexample_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CounterexampleSpec::new(1, -1, 2).unwrap();
    let phi = build_phi(&spec).unwrap();
    let rows = curves(&phi, 0.25, 16.0, 1001).unwrap();
    let path = dir.path().join("cx.csv");
    write_curves_csv(&path, &rows).unwrap();
    let (h, back) = read_csv(&path).unwrap();
    assert_eq!(h, CURVES_HEADER);
    assert_eq!(back.len(), 1001);
    assert!(back.iter().all(|r| r[5] >= 0.0 && r[6] >= 0.0));
    let report = runner::cx_verify(&RunConfig::default()).unwrap();
    write_json(&dir.path().join("r.json"), &report).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["divergence_at_2"], 70.0);
    assert_eq!(v["config"]["k"], 1);
}

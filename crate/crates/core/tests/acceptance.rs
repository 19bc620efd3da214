//! Acceptance run: every criterion at its stated tolerance, one line each.
//!
//! A failing criterion is printed as FAIL and counted in the summary line.
//! The process exits 0 once every criterion has been evaluated; set
//! `ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::time::Instant;

use inelastic_core::config::{Method, RunConfig};
use inelastic_core::runner::{self, Gate, Report};
use serde::Serialize;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn describe(gates: &[Gate]) -> String {
    gates
        .iter()
        .map(|g| format!("{} = {:.4e} {} {:.4e}", g.name, g.value, g.rule, g.threshold))
        .collect::<Vec<_>>()
        .join("; ")
}

fn from_reports<T: Serialize>(id: usize, name: &'static str, reports: &[&Report<T>], secs: f64, budget: Option<f64>) -> Outcome {
    let mut gates: Vec<Gate> = reports.iter().flat_map(|r| r.gates.clone()).collect();
    if let Some(b) = budget {
        gates.push(Gate::at_most("runtime s", secs, b));
    }
    Outcome { id, name, pass: gates.iter().all(|g| g.pass), detail: format!("{} [{secs:.1} s]", describe(&gates)) }
}

fn failed(id: usize, name: &'static str, err: impl std::fmt::Display) -> Outcome {
    Outcome { id, name, pass: false, detail: format!("error: {err}") }
}

macro_rules! timed {
    ($e:expr) => {{
        let t = Instant::now();
        let r = $e;
        (r, t.elapsed().as_secs_f64())
    }};
}

fn base(dt: f64, paths: usize) -> RunConfig {
    RunConfig { dt, paths, ..RunConfig::default() }
}

fn main() {
    let mut out = Vec::new();

    let cfg = base(1e-3, 100);
    out.push(match timed!(runner::lemma1(&cfg)) {
        (Ok(r), s) => from_reports(1, "clock identity T = t + sigma'(A)", &[&r], s, Some(60.0)),
        (Err(e), _) => failed(1, "clock identity T = t + sigma'(A)", e),
    });
    out.push(match timed!(runner::prop2(&cfg)) {
        (Ok(r), s) => from_reports(2, "W reassembled from B and B'", &[&r], s, None),
        (Err(e), _) => failed(2, "W reassembled from B and B'", e),
    });
    out.push(match timed!(runner::prop3(&cfg)) {
        (Ok(r), s) => from_reports(3, "construction round trip", &[&r], s, None),
        (Err(e), _) => failed(3, "construction round trip", e),
    });

    let cross = RunConfig { dt: 1e-4, paths: 200, samples: 10_000, method: Method::Sde, ..RunConfig::default() };
    out.push(match timed!(runner::crosscheck(&cross)) {
        (Ok(r), s) => from_reports(4, "weak uniqueness cross-check", &[&r], s, Some(600.0)),
        (Err(e), _) => failed(4, "weak uniqueness cross-check", e),
    });

    out.push(match timed!(runner::zero_set(&base(1e-4, 100))) {
        (Ok(r), s) => {
            let mut o = from_reports(5, "zero set shrinks", &[&r], s, None);
            let med = |v: &[runner::ZeroSetLevel]| v.iter().map(|l| format!("{:.3e}", l.median)).collect::<Vec<_>>().join(" > ");
            o.detail = format!("construction {}; sde {}; {}", med(&r.result.construction), med(&r.result.sde), o.detail);
            o
        }
        (Err(e), _) => failed(5, "zero set shrinks", e),
    });

    let plain = RunConfig { method: Method::Sde, ..cross.clone() };
    let refined = RunConfig { refine: true, ..plain.clone() };
    out.push(match timed!((runner::constraints(&plain), runner::constraints(&refined))) {
        ((Ok(a), Ok(b)), s) => {
            let mut o = from_reports(6, "inelastic constraint audit", &[&a, &b], s, None);
            o.detail = format!("{} clamped steps audited; {}", a.result.clamped_steps + b.result.clamped_steps, o.detail);
            o
        }
        ((Err(e), _), _) | ((_, Err(e)), _) => failed(6, "inelastic constraint audit", e),
    });

    let scale = RunConfig { dt: 1e-4, samples: 10_000, ..RunConfig::default() };
    out.push(match timed!(runner::scaling(&scale)) {
        (Ok(r), s) => from_reports(7, "scaling X_4 ~ 8 X_1", &[&r], s, None),
        (Err(e), _) => failed(7, "scaling X_4 ~ 8 X_1", e),
    });

    let cx = RunConfig { k: 1, ..RunConfig::default() };
    out.push(match timed!((runner::cx_build(&cx), runner::cx_verify(&cx))) {
        ((Ok(b), Ok(v)), s) => {
            let mut o = from_reports(8, "smooth-force counterexample", &[&v], s, Some(5.0));
            o.pass &= b.pass;
            o.detail = format!("divergence at 2 = {}; build: {}; {}", v.result.divergence_at_2, describe(&b.gates), o.detail);
            o
        }
        ((Err(e), _), _) | ((_, Err(e)), _) => failed(8, "smooth-force counterexample", e),
    });

    let eps = RunConfig { method: Method::Sde, ..base(1e-3, 20) };
    out.push(match timed!(runner::epsilon(&eps)) {
        (Ok(r), s) => from_reports(9, "epsilon splice converges", &[&r], s, None),
        (Err(e), _) => failed(9, "epsilon splice converges", e),
    });

    let cal = RunConfig { paths: 100, samples: 10_000, ..RunConfig::default() };
    out.push(match timed!(runner::calibration(&cal)) {
        (Ok(r), s) => {
            let mut o = from_reports(10, "test calibration", &[&r], s, None);
            o.detail = format!(
                "rejections one-sample {}/100, two-sample {}/100; {}",
                r.result.ks_one_sample_rejections, r.result.ks_two_sample_rejections, o.detail
            );
            o
        }
        (Err(e), _) => failed(10, "test calibration", e),
    });

    let mut all = true;
    for o in &out {
        all &= o.pass;
        println!("{} criterion {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    }
    let passed = out.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", out.len());
    if !all && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

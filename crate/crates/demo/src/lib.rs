//! WebAssembly entry points for the static page in `www/`.
//!
//! Each function takes plain numbers and returns a JSON string; the page
//! parses it and draws on a canvas. Errors come back as `{"error": "..."}`.

use inelastic_core::construction::{sample_construction_clock, ClockSamplerOptions};
use inelastic_core::counterexample::{build_phi, curves, CounterexampleSpec};
use inelastic_core::integrator::{simulate_sde, IntegratorConfig};
use inelastic_core::paths::{Channel, RngStream};
use inelastic_core::recovery::{audit_lemma4, build_recovery_window, DualPath};
use inelastic_core::stats::brownian_battery;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_STEPS: usize = 200_000;

fn to_json<T: Serialize>(r: inelastic_core::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

fn check_steps(dt: f64, t_max: f64) -> inelastic_core::Result<usize> {
    let n = (t_max / dt).round();
    if !(dt > 0.0 && t_max > 0.0 && n >= 1.0 && n <= MAX_STEPS as f64) {
        return Err(inelastic_core::Error::Precondition(format!("need 1 <= t_max/dt <= {MAX_STEPS}")));
    }
    Ok(n as usize)
}

#[derive(Serialize)]
struct Paths {
    t: Vec<f64>,
    construction_x: Vec<f64>,
    construction_a: Vec<f64>,
    sde_x: Vec<f64>,
    sde_a: Vec<f64>,
    impacts: usize,
}

/// One path of each method on `[0, t_max]`: position and cumulative
/// absorbed velocity `A`.
pub fn paths_json(dt: f64, t_max: f64, seed: u64) -> String {
    to_json((|| {
        let n = check_steps(dt, t_max)?;
        let c = sample_construction_clock(n, dt, RngStream::for_path(seed, 0, Channel::W), ClockSamplerOptions::default())?;
        let tr = simulate_sde(&IntegratorConfig::white_noise(dt, t_max, RngStream::for_path(seed, 0, Channel::Integrator)))?;
        Ok(Paths {
            t: tr.grid().times().collect(),
            construction_x: c.x,
            construction_a: c.a,
            sde_x: tr.x.values().to_vec(),
            sde_a: tr.a.values().to_vec(),
            impacts: tr.events.len(),
        })
    })())
}

#[derive(Serialize)]
struct Recovered {
    t: Vec<f64>,
    w: Vec<f64>,
    b: Vec<f64>,
    /// Open intervals where `W` follows the auxiliary path.
    o: Vec<(f64, f64)>,
    battery: inelastic_core::stats::BatteryReport,
    max_w_on_o: f64,
}

/// Driving noise rebuilt from an integrator trace with a fresh auxiliary
/// Brownian path, and the Brownian battery applied to it.
pub fn recover_json(dt: f64, t_max: f64, seed: u64) -> String {
    to_json((|| {
        check_steps(dt, t_max)?;
        let tr = simulate_sde(&IntegratorConfig::white_noise(dt, t_max, RngStream::for_path(seed, 0, Channel::Integrator)))?;
        let mut dual = DualPath::lazy(RngStream::for_path(seed, 0, Channel::BPrime), dt, MAX_STEPS);
        let art = build_recovery_window(&tr.x, &tr.v, &tr.a, &tr.b, &mut dual, t_max)?;
        let battery = brownian_battery(&art.w)?;
        let l4 = audit_lemma4(&art);
        Ok(Recovered {
            t: art.w.grid().times().collect(),
            w: art.w.values().to_vec(),
            b: tr.b.values().to_vec(),
            o: art.o.clone(),
            battery,
            max_w_on_o: l4.max_w_on_o,
        })
    })())
}

#[derive(Serialize)]
struct Counterexample {
    rows: Vec<inelastic_core::counterexample::CurveRow>,
    condition_number: f64,
    smoothness: u32,
}

/// `alpha, beta, phi, F` and the two solutions on `[lo, hi]`.
pub fn counterexample_json(k: u32, lo: f64, hi: f64, points: usize) -> String {
    to_json((|| {
        let spec = CounterexampleSpec::new(k, -2, 2)?;
        let phi = build_phi(&spec)?;
        let rows = curves(&phi, lo, hi, points.clamp(2, 20_000))?;
        Ok(Counterexample { rows, condition_number: phi.audit.condition_number, smoothness: phi.audit.smoothness })
    })())
}

#[wasm_bindgen]
pub fn paths(dt: f64, t_max: f64, seed: u32) -> String {
    paths_json(dt, t_max, seed as u64)
}

#[wasm_bindgen]
pub fn recover(dt: f64, t_max: f64, seed: u32) -> String {
    recover_json(dt, t_max, seed as u64)
}

#[wasm_bindgen]
pub fn counterexample(k: u32, lo: f64, hi: f64, points: u32) -> String {
    counterexample_json(k, lo, hi, points as usize)
}

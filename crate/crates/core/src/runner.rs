//! Monte Carlo experiments behind the command line and the acceptance run.
//!
//! Every experiment is a pure function of its [`RunConfig`]. Paths are
//! distributed over workers by index and gathered by index, so the output does
//! not depend on the number of threads. Random streams are keyed by
//! `(seed, path index, channel)`. The construction reads [`Channel::W`] and
//! the integrator [`Channel::Integrator`]; recovery takes its `B'` from
//! [`Channel::BPrime`], independent of both.

use serde::Serialize;

use crate::config::{Method, RunConfig};
use crate::construction::{reflect_construct, sample_construction_clock, verify_lemma1, verify_prop2, ClockSample, ClockSamplerOptions, PathBundle};
use crate::counterexample::{build_phi, divergence, verify_inclusion, Branch, Candidate, CounterexampleSpec, InclusionReport, PhiAudit};
use crate::error::{Error, Result};
use crate::integrator::{audit_constraints, simulate_sde, ConstraintAudit, IntegratorConfig, SolutionTrace};
use crate::paths::{sample_brownian, Channel, RngStream, SamplePath, TimeGrid};
use crate::recovery::{audit_lemma4, build_recovery, build_recovery_window, epsilon_splice, splice_gap, verify_prop3, DualPath, Lemma4Report, Prop3Report, RecoveryArtifacts};
use crate::stats::{brownian_battery, ks_one_sample, ks_two_sample, median, normal_cdf, zero_set_measure, TestReport, ALPHA};

/// Significance level of the law comparisons between methods.
pub const CROSSCHECK_ALPHA: f64 = 0.001;
/// Minimum fraction of paths passing the Brownian battery.
pub const BATTERY_PASS_RATE: f64 = 0.95;
/// Thresholds of the epsilon-splice experiment, decreasing.
pub const EPSILONS: [f64; 3] = [0.5, 0.1, 0.02];

/// `f(0), ..., f(n-1)` in index order, in parallel when available.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub rule: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl Gate {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Gate {
        Gate { name: name.into(), value, rule: "<=", threshold, pass: value <= threshold }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Gate {
        Gate { name: name.into(), value, rule: ">=", threshold, pass: value >= threshold }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Gate {
        Gate { name: name.into(), value, rule: ">", threshold, pass: value > threshold }
    }
}

/// Result of one experiment with the configuration that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub pass: bool,
    pub gates: Vec<Gate>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    fn new(command: &str, cfg: &RunConfig, gates: Vec<Gate>, result: T) -> Self {
        Report { command: command.into(), seed: cfg.seed, config: cfg.clone(), pass: gates.iter().all(|g| g.pass), gates, result }
    }
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

// ---- path sources -------------------------------------------------------

fn w_stream(cfg: &RunConfig, path: usize) -> RngStream {
    RngStream::for_path(cfg.seed, path as u64, Channel::W)
}

/// The construction on `[0, t_max]` of original time.
pub fn construction_bundle(cfg: &RunConfig, path: usize) -> Result<PathBundle> {
    let w = sample_brownian(TimeGrid::new(0.0, cfg.dt, cfg.steps())?, w_stream(cfg, path));
    reflect_construct(&w)
}

/// The construction on `[0, horizon]` of its own clock.
pub fn construction_clock(cfg: &RunConfig, path: usize, horizon: f64, dt: f64) -> Result<ClockSample> {
    let steps = (horizon / dt).round() as usize;
    sample_construction_clock(steps, dt, w_stream(cfg, path), ClockSamplerOptions::default())
}

pub fn sde_trace(cfg: &RunConfig, path: usize, dt: f64) -> Result<SolutionTrace> {
    let stream = RngStream::for_path(cfg.seed, path as u64, Channel::Integrator);
    simulate_sde(&IntegratorConfig::white_noise(dt, cfg.t_max, stream).with_refinement(cfg.refine))
}

fn dual_for(cfg: &RunConfig, path: usize) -> DualPath {
    DualPath::lazy(RngStream::for_path(cfg.seed, path as u64, Channel::BPrime), cfg.dt, cfg.bprime_cap)
}

/// `W` recovered from an integrator trace on `[0, t_max]` with a fresh `B'`.
pub fn recover_sde(cfg: &RunConfig, path: usize) -> Result<(SolutionTrace, RecoveryArtifacts)> {
    let tr = sde_trace(cfg, path, cfg.dt)?;
    let mut dual = dual_for(cfg, path);
    let art = build_recovery_window(&tr.x, &tr.v, &tr.a, &tr.b, &mut dual, cfg.t_max)?;
    Ok((tr, art))
}

/// The construction recovered from itself, with its own `B'`.
pub fn recover_construction(cfg: &RunConfig, path: usize) -> Result<(PathBundle, RecoveryArtifacts)> {
    let bd = construction_bundle(cfg, path)?;
    let mut dual = DualPath::fixed(&bd.bp);
    let art = build_recovery(&bd.x, &bd.v, &bd.a, &bd.b, &mut dual)?;
    Ok((bd, art))
}

// ---- construction identities --------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ResidualResult {
    pub residuals: Vec<f64>,
    pub clock_steps: Vec<usize>,
    pub max_residual: f64,
}

/// `max |T_t - t - sigma'(A_t)|` per construction path.
pub fn lemma1(cfg: &RunConfig) -> Result<Report<ResidualResult>> {
    let rows = collect(par_map(cfg.paths, |p| {
        let bd = construction_bundle(cfg, p)?;
        Ok((verify_lemma1(&bd)?, bd.tc.clock_steps()))
    }))?;
    let (residuals, clock_steps): (Vec<f64>, Vec<usize>) = rows.into_iter().unzip();
    let max_residual = max(residuals.iter().copied());
    let gates = vec![Gate::at_most("max residual", max_residual, cfg.tol.unwrap_or(2.0 * cfg.dt))];
    Ok(Report::new("verify lemma1", cfg, gates, ResidualResult { residuals, clock_steps, max_residual }))
}

/// `max |W - (B o tau + B' o tau')|` per construction path.
pub fn prop2(cfg: &RunConfig) -> Result<Report<ResidualResult>> {
    let rows = collect(par_map(cfg.paths, |p| {
        let bd = construction_bundle(cfg, p)?;
        Ok((verify_prop2(&bd), bd.tc.clock_steps()))
    }))?;
    let (residuals, clock_steps): (Vec<f64>, Vec<usize>) = rows.into_iter().unzip();
    let max_residual = max(residuals.iter().copied());
    let gates = vec![Gate::at_most("max residual", max_residual, cfg.tol.unwrap_or(1e-12))];
    Ok(Report::new("verify prop2", cfg, gates, ResidualResult { residuals, clock_steps, max_residual }))
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop3Result {
    pub source: Method,
    pub paths: Vec<Prop3Report>,
    /// Round trip only: `max |W_recovered - W|`.
    pub max_w_error: Option<f64>,
}

/// Recovery followed by the two identities. From the construction the
/// tolerance is `2 dt`; from the integrator, where `Y` is rebuilt from a
/// discretised velocity, it is `5 sqrt(dt)` and only the position identity is
/// gated.
pub fn prop3(cfg: &RunConfig) -> Result<Report<Prop3Result>> {
    match cfg.method {
        Method::Construction => {
            let rows = collect(par_map(cfg.paths, |p| {
                let (bd, art) = recover_construction(cfg, p)?;
                let err = max(art.w.values().iter().zip(bd.w.values()).map(|(a, b)| (a - b).abs()));
                Ok((verify_prop3(&art, &bd.x)?, err))
            }))?;
            let tol = cfg.tol.unwrap_or(2.0 * cfg.dt);
            let gates = vec![
                Gate::at_most("max residual (ii)", max(rows.iter().map(|r| r.0.residual_ii)), tol),
                Gate::at_most("max residual (iii)", max(rows.iter().map(|r| r.0.residual_iii)), tol),
            ];
            let max_w_error = Some(max(rows.iter().map(|r| r.1)));
            let paths = rows.into_iter().map(|r| r.0).collect();
            Ok(Report::new("verify prop3", cfg, gates, Prop3Result { source: cfg.method, paths, max_w_error }))
        }
        Method::Sde => {
            let paths = collect(par_map(cfg.paths, |p| {
                let (tr, art) = recover_sde(cfg, p)?;
                verify_prop3(&art, &tr.x)
            }))?;
            let tol = cfg.tol.unwrap_or(5.0 * cfg.dt.sqrt());
            let gates = vec![Gate::at_most("max residual (ii)", max(paths.iter().map(|r| r.residual_ii)), tol)];
            Ok(Report::new("verify prop3", cfg, gates, Prop3Result { source: cfg.method, paths, max_w_error: None }))
        }
    }
}

// ---- Brownian checks ----------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BatteryResult {
    pub source: Method,
    /// `B` on the clock grid for the construction, recovered `W` for the
    /// integrator.
    pub tested: &'static str,
    pub passed: usize,
    pub pass_rate: f64,
    pub reports: Vec<TestReport>,
}

fn battery_rows(cfg: &RunConfig, method: Method) -> Result<BatteryResult> {
    let reports = collect(par_map(cfg.paths, |p| {
        let path = match method {
            Method::Construction => {
                let s = construction_clock(cfg, p, cfg.t_max, cfg.dt)?;
                SamplePath::new(s.grid, s.b)?
            }
            Method::Sde => recover_sde(cfg, p)?.1.w,
        };
        Ok(brownian_battery(&path)?.report)
    }))?;
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok(BatteryResult {
        source: method,
        tested: match method {
            Method::Construction => "B on the clock grid",
            Method::Sde => "W recovered with a fresh B'",
        },
        passed,
        pass_rate: passed as f64 / reports.len() as f64,
        reports,
    })
}

pub fn bm(cfg: &RunConfig) -> Result<Report<BatteryResult>> {
    let res = battery_rows(cfg, cfg.method)?;
    let gates = vec![Gate::at_least("battery pass rate", res.pass_rate, BATTERY_PASS_RATE)];
    Ok(Report::new("verify bm", cfg, gates, res))
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Result {
    pub source: Method,
    pub paths: Vec<Lemma4Report>,
}

/// The open set `O`: its length against `tau'`, and `W <= 0` on it.
pub fn lemma4(cfg: &RunConfig) -> Result<Report<Lemma4Result>> {
    let paths = collect(par_map(cfg.paths, |p| {
        let art = match cfg.method {
            Method::Construction => recover_construction(cfg, p)?.1,
            Method::Sde => recover_sde(cfg, p)?.1,
        };
        Ok(audit_lemma4(&art))
    }))?;
    let gates = vec![
        Gate::at_most("max Stieltjes gap", max(paths.iter().map(|r| r.stieltjes_gap)), cfg.tol.unwrap_or(2.0 * cfg.dt)),
        Gate::at_most("max (W on O - slack)", paths.iter().map(|r| r.max_w_on_o - r.slack).fold(f64::NEG_INFINITY, f64::max), 0.0),
    ];
    Ok(Report::new("verify lemma4", cfg, gates, Lemma4Result { source: cfg.method, paths }))
}

// ---- law comparisons ----------------------------------------------------

/// `X_{t_max}` from `n` integrator traces.
pub fn sde_endpoints(cfg: &RunConfig, n: usize, dt: f64) -> Result<Vec<f64>> {
    collect(par_map(n, |p| Ok(sde_trace(cfg, p, dt)?.x.last())))
}

/// `X_horizon` from `n` construction paths with indices `offset..offset+n`.
pub fn construction_endpoints(cfg: &RunConfig, n: usize, offset: usize, horizon: f64, dt: f64) -> Result<Vec<f64>> {
    collect(par_map(n, |p| {
        let s = construction_clock(cfg, offset + p, horizon, dt)?;
        Ok(*s.x.last().expect("clock sample is never empty"))
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckResult {
    pub battery: BatteryResult,
    pub ks: TestReport,
    pub sde_mean: f64,
    pub construction_mean: f64,
}

/// The two methods against each other: `W` recovered from `paths`
/// integrator traces must look Brownian, and `X_{t_max}` from `samples`
/// paths of each method must agree in law. On a grid this is a convergence
/// check, not an identity.
pub fn crosscheck(cfg: &RunConfig) -> Result<Report<CrosscheckResult>> {
    let battery = battery_rows(cfg, Method::Sde)?;
    let xs = sde_endpoints(cfg, cfg.samples, cfg.dt)?;
    let xc = construction_endpoints(cfg, cfg.samples, 0, cfg.t_max, cfg.dt)?;
    let ks = ks_two_sample(&xs, &xc, CROSSCHECK_ALPHA)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gates = vec![
        Gate::at_least("battery pass rate", battery.pass_rate, BATTERY_PASS_RATE),
        Gate::above("two-sample KS p-value", ks.p_value.unwrap_or(0.0), CROSSCHECK_ALPHA),
    ];
    let res = CrosscheckResult { battery, sde_mean: mean(&xs), construction_mean: mean(&xc), ks };
    Ok(Report::new("crosscheck", cfg, gates, res))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingResult {
    pub horizon: f64,
    pub ks: TestReport,
}

/// `X_{4t}` against `8 X_t` (Brownian scaling lifted to the integral) with
/// the construction, `t = t_max`, at one grid step.
pub fn scaling(cfg: &RunConfig) -> Result<Report<ScalingResult>> {
    let x1: Vec<f64> = construction_endpoints(cfg, cfg.samples, 0, cfg.t_max, cfg.dt)?.into_iter().map(|x| 8.0 * x).collect();
    let x4 = construction_endpoints(cfg, cfg.samples, cfg.samples, 4.0 * cfg.t_max, cfg.dt)?;
    let ks = ks_two_sample(&x4, &x1, CROSSCHECK_ALPHA)?;
    let gates = vec![Gate::above("two-sample KS p-value", ks.p_value.unwrap_or(0.0), CROSSCHECK_ALPHA)];
    Ok(Report::new("scaling", cfg, gates, ScalingResult { horizon: cfg.t_max, ks }))
}

// ---- zero set -----------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ZeroSetLevel {
    pub dt: f64,
    pub median: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroSetResult {
    pub construction: Vec<ZeroSetLevel>,
    pub sde: Vec<ZeroSetLevel>,
}

/// Grid steps of the zero-set refinement study: `100 dt, 10 dt, dt`.
pub fn zero_set_steps(cfg: &RunConfig) -> [f64; 3] {
    [100.0 * cfg.dt, 10.0 * cfg.dt, cfg.dt]
}

fn zero_level(dt: f64, measures: Vec<f64>) -> ZeroSetLevel {
    ZeroSetLevel { dt, median: median(&measures), mean: measures.iter().sum::<f64>() / measures.len() as f64 }
}

fn strictly_decreasing(levels: &[ZeroSetLevel]) -> bool {
    levels.windows(2).all(|w| w[1].median < w[0].median)
}

/// Time spent at the wall on `[0, t_max]` under grid refinement.
pub fn zero_set(cfg: &RunConfig) -> Result<Report<ZeroSetResult>> {
    if cfg.t_max / (100.0 * cfg.dt) < 1.0 {
        return Err(Error::Config { key: "dt".into(), reason: "the zero-set study needs t_max >= 100 dt".into() });
    }
    let mut construction = Vec::new();
    let mut sde = Vec::new();
    for dt in zero_set_steps(cfg) {
        let mc = collect(par_map(cfg.paths, |p| {
            let s = construction_clock(cfg, p, cfg.t_max, dt)?;
            Ok(zero_set_measure(&SamplePath::new(s.grid, s.x)?, 0.0))
        }))?;
        construction.push(zero_level(dt, mc));
        let ms = collect(par_map(cfg.paths, |p| Ok(zero_set_measure(&sde_trace(cfg, p, dt)?.x, 0.0))))?;
        sde.push(zero_level(dt, ms));
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let gates = vec![
        Gate::at_least("construction median strictly decreasing", flag(strictly_decreasing(&construction)), 1.0),
        Gate::at_least("sde median strictly decreasing", flag(strictly_decreasing(&sde)), 1.0),
    ];
    Ok(Report::new("zero-set", cfg, gates, ZeroSetResult { construction, sde }))
}

// ---- integrator constraint audit -----------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintResult {
    pub audits: Vec<ConstraintAudit>,
    pub clamped_steps: usize,
    pub violations: usize,
}

/// Exhaustive audit of the clamp law over `paths` integrator traces.
pub fn constraints(cfg: &RunConfig) -> Result<Report<ConstraintResult>> {
    let audits = collect(par_map(cfg.paths, |p| Ok(audit_constraints(&sde_trace(cfg, p, cfg.dt)?))))?;
    let violations = audits.iter().map(|a| a.violations()).sum::<usize>();
    let clamped_steps = audits.iter().map(|a| a.clamped_steps).sum();
    let gates = vec![Gate::at_most("violations", violations as f64, 0.0)];
    Ok(Report::new("constraints", cfg, gates, ConstraintResult { audits, clamped_steps, violations }))
}

// ---- epsilon splice -----------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonPath {
    /// `sup |W_eps - W|` for each entry of [`EPSILONS`].
    pub gaps: Vec<f64>,
    pub retained_jumps: Vec<usize>,
    pub nonincreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonResult {
    pub epsilons: Vec<f64>,
    pub paths: Vec<EpsilonPath>,
    pub monotone_paths: usize,
    pub endpoint_ok_paths: usize,
}

/// On each integrator trace, the epsilon splices for decreasing thresholds
/// against the full splice, all with the same `B'`.
pub fn epsilon(cfg: &RunConfig) -> Result<Report<EpsilonResult>> {
    let paths = collect(par_map(cfg.paths, |p| {
        let (tr, art) = recover_sde(cfg, p)?;
        let mut gaps = Vec::new();
        let mut retained_jumps = Vec::new();
        for eps in EPSILONS {
            let mut dual = dual_for(cfg, p);
            let sp = epsilon_splice(&tr.v, &tr.a, &tr.b, &mut dual, eps, Some(cfg.t_max))?;
            gaps.push(splice_gap(&sp.w_eps, &art.w));
            retained_jumps.push(sp.jump_times.len());
        }
        let nonincreasing = gaps.windows(2).all(|w| w[1] <= w[0]);
        Ok(EpsilonPath { gaps, retained_jumps, nonincreasing })
    }))?;
    let monotone_paths = paths.iter().filter(|p| p.nonincreasing).count();
    let endpoint_ok_paths = paths.iter().filter(|p| p.gaps[2] <= p.gaps[0]).count();
    let n = paths.len() as f64;
    let gates = vec![
        Gate::at_least("paths with nonincreasing gap", monotone_paths as f64, n),
        Gate::at_least("paths with gap(0.02) <= gap(0.5)", endpoint_ok_paths as f64, n),
    ];
    Ok(Report::new("epsilon", cfg, gates, EpsilonResult { epsilons: EPSILONS.to_vec(), paths, monotone_paths, endpoint_ok_paths }))
}

// ---- calibration --------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub repetitions: usize,
    pub sample_size: usize,
    pub alpha: f64,
    pub ks_one_sample_rejections: usize,
    pub ks_two_sample_rejections: usize,
}

fn normal_sample(stream: RngStream, n: usize) -> Vec<f64> {
    let mut src = stream.normals();
    (0..n).map(|_| src.next_normal()).collect()
}

/// Rejection rates of the KS tests on exact null samples, `paths`
/// repetitions of `samples` draws; each must lie in `[alpha/2, 2 alpha]`.
pub fn calibration(cfg: &RunConfig) -> Result<Report<CalibrationResult>> {
    let n = cfg.samples;
    let rows = collect(par_map(cfg.paths, |r| {
        let a = normal_sample(RngStream::for_path(cfg.seed, r as u64, Channel::W), n);
        let b = normal_sample(RngStream::for_path(cfg.seed, r as u64, Channel::BPrime), n);
        let one = ks_one_sample(&a, |x| normal_cdf(x, 0.0, 1.0), ALPHA)?;
        let two = ks_two_sample(&a, &b, ALPHA)?;
        Ok((!one.pass, !two.pass))
    }))?;
    let reps = rows.len();
    let one = rows.iter().filter(|r| r.0).count();
    let two = rows.iter().filter(|r| r.1).count();
    let rate = |k: usize| k as f64 / reps as f64;
    let gates = vec![
        Gate::at_least("one-sample rejection rate (low)", rate(one), 0.5 * ALPHA),
        Gate::at_most("one-sample rejection rate (high)", rate(one), 2.0 * ALPHA),
        Gate::at_least("two-sample rejection rate (low)", rate(two), 0.5 * ALPHA),
        Gate::at_most("two-sample rejection rate (high)", rate(two), 2.0 * ALPHA),
    ];
    let res = CalibrationResult { repetitions: reps, sample_size: n, alpha: ALPHA, ks_one_sample_rejections: one, ks_two_sample_rejections: two };
    Ok(Report::new("calibration", cfg, gates, res))
}

// ---- counterexample -----------------------------------------------------

/// Node range used by the command line: `[1/4, 16]`.
pub const CX_NODES: (i32, i32) = (-1, 2);

#[derive(Debug, Clone, Serialize)]
pub struct CxBuildResult {
    pub spec: CounterexampleSpec,
    pub audit: PhiAudit,
}

pub fn counterexample_spec(cfg: &RunConfig) -> Result<CounterexampleSpec> {
    CounterexampleSpec::new(cfg.k, CX_NODES.0, CX_NODES.1)
}

pub fn cx_build(cfg: &RunConfig) -> Result<Report<CxBuildResult>> {
    let spec = counterexample_spec(cfg)?;
    let phi = build_phi(&spec)?;
    let a = phi.audit.clone();
    let gates = vec![
        Gate::above("min gap below the envelope", a.min_gap, 0.0),
        Gate::at_least("achieved smoothness", a.smoothness as f64, (cfg.k + 3) as f64),
    ];
    Ok(Report::new("counterexample build", cfg, gates, CxBuildResult { spec, audit: a }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CxVerifyResult {
    pub spec: CounterexampleSpec,
    pub condition_number: f64,
    /// One report per octave `[4^m, 4^(m+1)]` and branch.
    pub alpha: Vec<InclusionReport>,
    pub beta: Vec<InclusionReport>,
    /// `X_alpha(2) - X_beta(2)`.
    pub divergence_at_2: f64,
    /// `alpha(2) - beta(2)`, the exact value of the above.
    pub divergence_expected: f64,
    pub sup_divergence: f64,
    pub sup_divergence_at: f64,
}

/// Points per octave of the inclusion check.
pub const CX_GRID_PER_OCTAVE: usize = 30_000;

/// Checks both candidates on every octave of the node range, octave `m`
/// with step `3 4^m / CX_GRID_PER_OCTAVE`, at tolerance `tol` (default
/// `1e-6`) relative to `4^(p m)`, the scale of the solution on that octave.
pub fn cx_verify(cfg: &RunConfig) -> Result<Report<CxVerifyResult>> {
    let spec = counterexample_spec(cfg)?;
    let phi = build_phi(&spec)?;
    let tol = cfg.tol.unwrap_or(1e-6);
    let mut reports = [Vec::new(), Vec::new()];
    for (slot, branch) in [Branch::Alpha, Branch::Beta].into_iter().enumerate() {
        for m in spec.n_min..spec.n_max {
            let lo = spec.s(m);
            let h = 3.0 * lo / CX_GRID_PER_OCTAVE as f64;
            let scale = 4f64.powi(spec.p() * m).max(1.0);
            reports[slot].push(verify_inclusion(&Candidate::new(&phi, branch), lo, 4.0 * lo, h, tol * scale)?);
        }
    }
    let xa = Candidate::new(&phi, Branch::Alpha);
    let xb = Candidate::new(&phi, Branch::Beta);
    use crate::counterexample::InclusionProblem;
    let divergence_at_2 = xa.position(2.0)? - xb.position(2.0)?;
    let divergence_expected = spec.alpha(2.0)? - spec.beta(2.0)?;
    let (lo, hi) = spec.range();
    let (sup_divergence, sup_divergence_at) = divergence(&phi, lo, hi, 100_001)?;
    let [alpha, beta] = reports;
    let ok = |v: &[InclusionReport]| if v.iter().all(|r| r.pass) { 1.0 } else { 0.0 };
    let gates = vec![
        Gate::at_least("X_alpha passes (a)-(d)", ok(&alpha), 1.0),
        Gate::at_least("X_beta passes (a)-(d)", ok(&beta), 1.0),
        Gate::at_most("|divergence at 2 - (alpha(2) - beta(2))|", (divergence_at_2 - divergence_expected).abs(), 1e-9),
        Gate::above("divergence at 2", divergence_at_2, 0.0),
    ];
    let res = CxVerifyResult {
        spec,
        condition_number: phi.audit.condition_number,
        alpha,
        beta,
        divergence_at_2,
        divergence_expected,
        sup_divergence,
        sup_divergence_at,
    };
    Ok(Report::new("counterexample verify", cfg, gates, res))
}

//! Direct time stepping of the second-order equation with a completely
//! inelastic wall at `x = 0`.
//!
//! Each step is a symplectic-Euler move followed by a projection:
//!
//! ```text
//! v* = V + dB        x* = X + v* dt
//! if x* < 0, or x* == 0 and v* < 0:   X = 0, V = 0, A += -v*
//! else:                               X = x*, V = v*
//! ```
//!
//! Velocity is never stored independently. It is derived as
//! `V = (v0 + B) + A`, and a clamp sets `A = -(v0 + B)`, so the velocity
//! identity holds to the last bit and post-clamp velocity is exactly zero.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::construction::PathBundle;
use crate::error::{Error, Result};
use crate::paths::{NormalSource, RngStream, SamplePath, TimeGrid};

/// Time-dependent deterministic force.
pub type ForceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Forcing {
    /// `dB` is a Brownian increment drawn from the stream.
    WhiteNoise(RngStream),
    /// `dB = F(t_k) dt`.
    Deterministic(ForceFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::WhiteNoise(s) => f.debug_tuple("WhiteNoise").field(s).finish(),
            Forcing::Deterministic(_) => f.write_str("Deterministic(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub x0: f64,
    pub v0: f64,
    pub forcing: Forcing,
    /// Place the clamp at the linear zero crossing inside the step instead of
    /// at its end.
    pub refine_impacts: bool,
}

impl IntegratorConfig {
    pub fn white_noise(dt: f64, t_max: f64, stream: RngStream) -> Self {
        IntegratorConfig { dt, t_max, x0: 0.0, v0: 0.0, forcing: Forcing::WhiteNoise(stream), refine_impacts: false }
    }

    pub fn deterministic(dt: f64, t_max: f64, force: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        IntegratorConfig { dt, t_max, x0: 0.0, v0: 0.0, forcing: Forcing::Deterministic(Arc::new(force)), refine_impacts: false }
    }

    pub fn with_initial(mut self, x0: f64, v0: f64) -> Self {
        self.x0 = x0;
        self.v0 = v0;
        self
    }

    pub fn with_refinement(mut self, on: bool) -> Self {
        self.refine_impacts = on;
        self
    }

    fn validate(&self) -> Result<TimeGrid> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(Error::Precondition(format!("t_max = {} must be >= dt = {}", self.t_max, self.dt)));
        }
        if !(self.x0 >= 0.0) || !self.x0.is_finite() || !self.v0.is_finite() {
            return Err(Error::Precondition(format!("initial state ({}, {}) must be finite with x0 >= 0", self.x0, self.v0)));
        }
        TimeGrid::covering(self.dt, self.t_max)
    }
}

/// One contact episode. Consecutive clamped steps are merged into the event
/// of the first one: on the grid a single impact followed by resting contact
/// shows up as a run of clamps, which in the continuum is one impact plus an
/// accumulation of infinitesimal ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactEvent {
    pub time: f64,
    /// Incoming velocity of the first clamp of the episode (< 0).
    pub v_in: f64,
    /// `-v_in`.
    pub jump: f64,
    /// Time of the last clamped grid point of the episode.
    pub episode_end: f64,
    /// Total increase of `A` over the episode.
    pub absorbed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTrace {
    pub x: SamplePath,
    pub v: SamplePath,
    pub a: SamplePath,
    pub b: SamplePath,
    pub v0: f64,
    pub events: Vec<ImpactEvent>,
    /// `clamped[k]` is set when grid point `k` was produced by a clamp.
    pub clamped: Vec<bool>,
}

impl SolutionTrace {
    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }

    /// `max_k |V_k - (v0 + B_k + A_k)|`.
    pub fn velocity_identity_residual(&self) -> f64 {
        (0..self.x.len())
            .map(|k| (self.v.at(k) - ((self.v0 + self.b.at(k)) + self.a.at(k))).abs())
            .fold(0.0, f64::max)
    }

    /// The construction viewed as a trace on its clock grid. Every clock step
    /// over which `A` increased becomes an event, with incoming velocity
    /// `V_{j+1} - (A_{j+1} - A_j)`.
    pub fn from_bundle(bundle: &PathBundle) -> SolutionTrace {
        let a = bundle.a.values();
        let grid = bundle.clock_grid;
        let mut clamped = vec![false; a.len()];
        let mut events = Vec::new();
        for j in 0..a.len().saturating_sub(1) {
            let da = a[j + 1] - a[j];
            if da > 0.0 {
                clamped[j + 1] = true;
                let v_in = bundle.v.at(j + 1) - da;
                let t = grid.time(j + 1);
                events.push(ImpactEvent { time: t, v_in, jump: -v_in, episode_end: t, absorbed: da });
            }
        }
        SolutionTrace {
            x: bundle.x.clone(),
            v: bundle.v.clone(),
            a: bundle.a.clone(),
            b: bundle.b.clone(),
            v0: 0.0,
            events,
            clamped,
        }
    }
}

struct Stepper {
    v0: f64,
    x: f64,
    a: f64,
    b: f64,
    in_episode: bool,
}

impl Stepper {
    fn velocity(&self) -> f64 {
        (self.v0 + self.b) + self.a
    }

    fn clamp(&mut self) {
        self.x = 0.0;
        self.a = -(self.v0 + self.b);
    }
}

fn record_clamp(events: &mut Vec<ImpactEvent>, in_episode: bool, time: f64, v_in: f64, absorbed: f64) {
    match (in_episode, events.last_mut()) {
        (true, Some(ev)) => {
            ev.episode_end = time;
            ev.absorbed += absorbed;
        }
        _ => events.push(ImpactEvent { time, v_in, jump: -v_in, episode_end: time, absorbed }),
    }
}

fn simulate(config: &IntegratorConfig) -> Result<SolutionTrace> {
    let grid = config.validate()?;
    let dt = config.dt;
    let (mut noise, mut bridge): (Option<NormalSource>, Option<NormalSource>) = match &config.forcing {
        Forcing::WhiteNoise(s) => (Some(s.normals()), Some(s.sub_block(1).normals())),
        Forcing::Deterministic(_) => (None, None),
    };
    let sd = dt.sqrt();
    let n_points = grid.len();
    let mut xs = Vec::with_capacity(n_points);
    let mut vs = Vec::with_capacity(n_points);
    let mut as_ = Vec::with_capacity(n_points);
    let mut bs = Vec::with_capacity(n_points);
    let mut clamped = Vec::with_capacity(n_points);
    let mut events = Vec::new();

    let mut s = Stepper { v0: config.v0, x: config.x0, a: 0.0, b: 0.0, in_episode: false };
    // Starting on the wall with inward velocity is an impact at time 0.
    if s.x == 0.0 && s.v0 < 0.0 {
        s.clamp();
        record_clamp(&mut events, false, 0.0, config.v0, -config.v0);
        s.in_episode = true;
    }
    xs.push(s.x);
    vs.push(s.velocity());
    as_.push(s.a);
    bs.push(s.b);
    clamped.push(s.in_episode);

    for k in 0..grid.n() {
        let t = grid.time(k);
        let db = match (&config.forcing, noise.as_mut()) {
            (Forcing::WhiteNoise(_), Some(normals)) => sd * normals.next_normal(),
            (Forcing::Deterministic(f), _) => f(t) * dt,
            _ => unreachable!("white-noise forcing always carries a normal source"),
        };
        let v = s.velocity();
        let v_star = v + db;
        let x_star = s.x + v_star * dt;
        let b_old = s.b;
        s.b += db;
        let hits = x_star < 0.0 || (x_star == 0.0 && v_star < 0.0);
        if !hits {
            s.x = x_star;
            s.in_episode = false;
        } else if config.refine_impacts && s.x > 0.0 {
            // Zero of the linear position inside the step.
            let s0 = s.x / (-v_star);
            let b_mid = match (&config.forcing, bridge.as_mut()) {
                (Forcing::WhiteNoise(_), Some(normals)) => {
                    let mean = b_old + db * s0 / dt;
                    mean + (s0 * (dt - s0) / dt).max(0.0).sqrt() * normals.next_normal()
                }
                (Forcing::Deterministic(f), _) => b_old + f(t) * s0,
                _ => unreachable!(),
            };
            let v_mid = v + (b_mid - b_old);
            if v_mid >= 0.0 {
                let a_old = s.a;
                s.clamp();
                record_clamp(&mut events, s.in_episode, grid.time(k + 1), v_star, s.a - a_old);
                s.in_episode = true;
            } else {
                let a_mid = s.a - v_mid;
                record_clamp(&mut events, false, t + s0, v_mid, -v_mid);
                let v_rest = s.b - b_mid;
                let x_rest = v_rest * (dt - s0);
                if x_rest < 0.0 || (x_rest == 0.0 && v_rest < 0.0) {
                    s.clamp();
                    if let Some(ev) = events.last_mut() {
                        ev.episode_end = grid.time(k + 1);
                        ev.absorbed += s.a - a_mid;
                    }
                    s.in_episode = true;
                } else {
                    s.x = x_rest;
                    s.a = a_mid;
                    s.in_episode = false;
                }
            }
        } else {
            let a_old = s.a;
            s.clamp();
            record_clamp(&mut events, s.in_episode, grid.time(k + 1), v_star, s.a - a_old);
            s.in_episode = true;
        }
        xs.push(s.x);
        vs.push(s.velocity());
        as_.push(s.a);
        bs.push(s.b);
        clamped.push(s.in_episode);
    }
    Ok(SolutionTrace {
        x: SamplePath::new(grid, xs)?,
        v: SamplePath::new(grid, vs)?,
        a: SamplePath::new(grid, as_)?,
        b: SamplePath::new(grid, bs)?,
        v0: config.v0,
        events,
        clamped,
    })
}

/// White-noise driven trace.
pub fn simulate_sde(config: &IntegratorConfig) -> Result<SolutionTrace> {
    if !matches!(config.forcing, Forcing::WhiteNoise(_)) {
        return Err(Error::Precondition("simulate_sde needs white-noise forcing".into()));
    }
    simulate(config)
}

/// Trace under a deterministic force.
pub fn simulate_deterministic(config: &IntegratorConfig) -> Result<SolutionTrace> {
    if !matches!(config.forcing, Forcing::Deterministic(_)) {
        return Err(Error::Precondition("simulate_deterministic needs a deterministic force".into()));
    }
    simulate(config)
}

/// Events whose incoming speed exceeds `epsilon`, in time order.
pub fn detect_impacts(trace: &SolutionTrace, epsilon: f64) -> Vec<ImpactEvent> {
    trace.events.iter().copied().filter(|e| e.v_in < -epsilon).collect()
}

/// Violations of the discrete inelastic constraint found by an exhaustive
/// audit of a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintAudit {
    pub clamped_steps: usize,
    /// Clamped grid points with `(X, V) != (0, 0)`.
    pub clamp_violations: usize,
    /// Steps over which `A` decreased.
    pub monotonicity_violations: usize,
    pub negative_positions: usize,
}

impl ConstraintAudit {
    pub fn violations(&self) -> usize {
        self.clamp_violations + self.monotonicity_violations + self.negative_positions
    }
}

pub fn audit_constraints(trace: &SolutionTrace) -> ConstraintAudit {
    let mut audit = ConstraintAudit::default();
    for k in 0..trace.x.len() {
        if trace.clamped[k] {
            audit.clamped_steps += 1;
            if trace.x.at(k) != 0.0 || trace.v.at(k) != 0.0 {
                audit.clamp_violations += 1;
            }
        }
        if trace.x.at(k) < 0.0 {
            audit.negative_positions += 1;
        }
    }
    audit.monotonicity_violations = trace.a.values().windows(2).filter(|w| w[1] < w[0]).count();
    audit
}

/// Fraction of grid time with `|V| < sqrt(dt)`.
pub fn slow_velocity_fraction(trace: &SolutionTrace) -> f64 {
    let thr = trace.grid().dt().sqrt();
    trace.v.values().iter().filter(|v| v.abs() < thr).count() as f64 / trace.v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::zero_set_measure;
    use proptest::prelude::*;

    #[test]
    fn rest_state_stays_at_rest() {
        let cfg = IntegratorConfig::white_noise(1e-2, 1.0, RngStream::zero_noise());
        let tr = simulate_sde(&cfg).unwrap();
        assert!(tr.x.values().iter().chain(tr.v.values()).chain(tr.a.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn no_force_no_contact() {
        let cfg = IntegratorConfig::white_noise(1e-2, 1.0, RngStream::zero_noise()).with_initial(1.0, 0.0);
        let tr = simulate_sde(&cfg).unwrap();
        assert!(tr.x.values().iter().all(|&x| x == 1.0));
        assert!(tr.events.is_empty());
        let free = simulate_deterministic(&IntegratorConfig::deterministic(1e-2, 1.0, |_| 0.0).with_initial(0.0, 1.0)).unwrap();
        for k in 0..free.x.len() {
            assert!((free.x.at(k) - free.x.grid().time(k)).abs() < 1e-12);
        }
        assert!(free.events.is_empty());
    }

    #[test]
    fn ballistic_flight_and_resting_contact() {
        for &dt in &[1e-2, 1e-3] {
            let cfg = IntegratorConfig::deterministic(dt, 3.0, |_| -1.0).with_initial(0.0, 1.0);
            let tr = simulate_deterministic(&cfg).unwrap();
            let ev = detect_impacts(&tr, 0.5);
            assert_eq!(ev.len(), 1);
            assert!((ev[0].time - 2.0).abs() <= 2.0 * dt, "impact at {}", ev[0].time);
            assert!((ev[0].v_in + 1.0).abs() <= 2.0 * dt, "v_in {}", ev[0].v_in);
            assert_eq!(ev[0].jump, -ev[0].v_in);
            assert!((ev[0].episode_end - 3.0).abs() < 1e-9);
            for k in 0..tr.x.len() {
                let t = tr.grid().time(k);
                if t < 1.9 {
                    assert!((tr.x.at(k) - (t - t * t / 2.0)).abs() <= 2.0 * dt);
                    assert_eq!(tr.a.at(k), 0.0);
                }
                if t > 2.0 + 2.0 * dt {
                    assert_eq!((tr.x.at(k), tr.v.at(k)), (0.0, 0.0));
                    assert!((tr.a.at(k) - (t - 1.0)).abs() <= 2.0 * dt);
                }
            }
            assert_eq!(audit_constraints(&tr).violations(), 0);
            // Any threshold below the first impact keeps exactly that one.
            assert_eq!(detect_impacts(&tr, 0.99 - 2.0 * dt).len(), 1);
        }
    }

    #[test]
    fn refined_ballistic_impact_is_sharper() {
        let dt = 1e-2;
        let cfg = IntegratorConfig::deterministic(dt, 3.0, |_| -1.0).with_initial(0.2, 1.0).with_refinement(true);
        let tr = simulate_deterministic(&cfg).unwrap();
        // Exact impact: 0.2 + t - t^2/2 = 0.
        let t_star = 1.0 + 1.4f64.sqrt();
        let ev = detect_impacts(&tr, 0.5);
        assert_eq!(ev.len(), 1);
        assert!((ev[0].time - t_star).abs() < dt, "{} vs {t_star}", ev[0].time);
        assert!(tr.velocity_identity_residual() == 0.0);
    }

    #[test]
    fn inward_start_on_the_wall_is_an_immediate_impact() {
        let cfg = IntegratorConfig::white_noise(1e-3, 0.1, RngStream::new(1, 0)).with_initial(0.0, -0.7);
        let tr = simulate_sde(&cfg).unwrap();
        assert_eq!(tr.events[0].time, 0.0);
        assert_eq!(tr.events[0].v_in, -0.7);
        assert_eq!((tr.x.at(0), tr.v.at(0), tr.a.at(0)), (0.0, 0.0, 0.7));
    }

    #[test]
    fn rejects_bad_config() {
        let base = IntegratorConfig::white_noise(1e-3, 1.0, RngStream::new(0, 0));
        assert!(simulate_sde(&base.clone().with_initial(-1.0, 0.0)).is_err());
        assert!(simulate_sde(&IntegratorConfig { dt: 0.0, ..base.clone() }).is_err());
        assert!(simulate_sde(&IntegratorConfig { t_max: 1e-4, ..base.clone() }).is_err());
        assert!(simulate_deterministic(&base).is_err());
    }

    #[test]
    fn no_contact_trace_has_no_events() {
        let cfg = IntegratorConfig::deterministic(1e-3, 1.0, |_| 1.0).with_initial(0.5, 0.0);
        assert!(detect_impacts(&simulate_deterministic(&cfg).unwrap(), 0.0).is_empty());
    }

    #[test]
    fn zero_set_shrinks_under_refinement() {
        let medians: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&dt| {
                let m: Vec<f64> = (0..60)
                    .map(|i| {
                        let tr = simulate_sde(&IntegratorConfig::white_noise(dt, 1.0, RngStream::new(8, i))).unwrap();
                        zero_set_measure(&tr.x, 0.0)
                    })
                    .collect();
                crate::stats::median(&m)
            })
            .collect();
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    #[test]
    fn slow_velocity_fraction_shrinks() {
        let f: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&dt| {
                (0..60)
                    .map(|i| slow_velocity_fraction(&simulate_sde(&IntegratorConfig::white_noise(dt, 1.0, RngStream::new(9, i))).unwrap()))
                    .sum::<f64>()
                    / 60.0
            })
            .collect();
        assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stochastic_trace_invariants(seed in any::<u64>(), x0 in 0.0f64..0.1, v0 in -1.0f64..1.0, refine in any::<bool>()) {
            let cfg = IntegratorConfig::white_noise(1e-3, 1.0, RngStream::new(seed, 2)).with_initial(x0, v0).with_refinement(refine);
            let tr = simulate_sde(&cfg).unwrap();
            prop_assert_eq!(tr.velocity_identity_residual(), 0.0);
            let audit = audit_constraints(&tr);
            prop_assert_eq!(audit.violations(), 0, "{:?}", audit);
            for ev in detect_impacts(&tr, 0.0) {
                prop_assert!(ev.v_in < 0.0 && ev.jump == -ev.v_in);
                if !refine {
                    let k = (ev.time / 1e-3).round() as usize;
                    prop_assert_eq!(tr.x.at(k), 0.0);
                }
            }
            prop_assert!(tr.events.windows(2).all(|w| w[1].time > w[0].time));
        }
    }
}

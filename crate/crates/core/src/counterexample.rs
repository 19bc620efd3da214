//! A smooth force under which the inelastic-impact dynamics has two distinct
//! solutions from the same initial state.
//!
//! Fix `p = k + 3` and interlaced node sequences `s_n = 4^n`,
//! `t_n = r 4^n` with `1 < r < 4` (default `r = 2`). `alpha` and `beta` are the
//! piecewise-linear interpolants of `u^p` on the `s_n` and on the `t_n`; both
//! are convex and increasing. A function `phi` sitting strictly below
//! `min(alpha, beta)`, touching `alpha` tangentially (from the right) exactly
//! at the `s_n` and `beta` exactly at the `t_n`, gives two solutions
//! `X = alpha - phi` and `X = beta - phi` under the force `F = -phi''`: each
//! is a free flight between its contact nodes and stops dead at each of them,
//! with `A` equal to the slope of `alpha` (resp. `beta`).
//!
//! `phi` is built on `[1, 4]` and extended by `phi(4u) = 4^p phi(u)`. On the
//! base interval it is a spline of four two-point Hermite pieces of degree
//! `2p + 1` with knots `1, (1+r)/2, r, (r+4)/2, 4`:
//!
//! * at `1`: value `1`, slope `alpha'(1+)`, curvature `-kappa_1`, higher
//!   derivatives up to order `p` zero;
//! * at `r`: value `r^p`, slope `beta'(r+)`, curvature `-kappa_2`, zeros;
//! * at `4`: the data at `1` scaled by `4^(p - l)` for derivative order `l`,
//!   so the extension is `C^p` across every `4^n`;
//! * at the two interior knots: value `-4^p` and all derivatives zero, which
//!   pulls the spline well below the envelope between contacts.
//!
//! The negative curvatures at the contacts make the contact strictly one-sided
//! with room to spare: `kappa_1` is twice the curvature a parabola would need
//! to stay under `beta` on `[1, r]` and `kappa_2` likewise for `alpha` on
//! `[r, 4]`. The strict inequality off the contacts is not proved; it is
//! audited on a dense grid and a violation is a construction error.
//!
//! Each piece is written in its local variable `x = (u - a)/h`, so its
//! lower `p + 1` coefficients are the left-end data divided by factorials and
//! the contact values and slopes are reproduced to the last bit. The upper
//! coefficients solve a `(p+1) x (p+1)` system (LU), and the condition number
//! of the full Hermite matrix is reported.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Curvature safety factor at the contacts.
const KAPPA_FACTOR: f64 = 2.0;
/// Interior knot value in units of `4^p`.
const INTERIOR_LEVEL: f64 = -1.0;
/// Largest supported regularity index; beyond it the Hermite systems are too
/// ill-conditioned to trust.
pub const K_MAX: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CounterexampleSpec {
    pub k: u32,
    /// Ratio `t_0 / s_0` of the interlaced node sequences.
    pub r: f64,
    pub n_min: i32,
    pub n_max: i32,
}

impl CounterexampleSpec {
    pub fn new(k: u32, n_min: i32, n_max: i32) -> Result<Self> {
        Self::with_ratio(k, 2.0, n_min, n_max)
    }

    pub fn with_ratio(k: u32, r: f64, n_min: i32, n_max: i32) -> Result<Self> {
        if k > K_MAX {
            return Err(Error::Precondition(format!("k = {k} exceeds the supported maximum {K_MAX}")));
        }
        if !(r > 1.0 && r < 4.0) {
            return Err(Error::Construction(format!("node sequences must interlace: need 1 < t_0/s_0 < 4, got {r}")));
        }
        if n_min < -5 || n_min >= n_max {
            return Err(Error::Precondition(format!("node range [{n_min}, {n_max}] must satisfy -5 <= n_min < n_max")));
        }
        Ok(CounterexampleSpec { k, r, n_min, n_max })
    }

    pub fn p(&self) -> i32 {
        self.k as i32 + 3
    }

    pub fn s(&self, n: i32) -> f64 {
        4f64.powi(n)
    }

    pub fn t(&self, n: i32) -> f64 {
        self.r * 4f64.powi(n)
    }

    /// Evaluation range `[s_{n_min}, s_{n_max}]`.
    pub fn range(&self) -> (f64, f64) {
        (self.s(self.n_min), self.s(self.n_max))
    }

    /// Slope of each linear piece relative to its left node, `(4^p - 1)/3`.
    fn unit_slope(&self) -> f64 {
        (4f64.powi(self.p()) - 1.0) / 3.0
    }

    fn check_range(&self, u: f64, lo: f64, hi: f64) -> Result<()> {
        if !(u >= lo && u <= hi) {
            return Err(Error::Precondition(format!("u = {u} outside the covered node range [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Interpolant of `u^p` on nodes `base 4^n`, with its right derivative.
    fn interpolant(&self, u: f64, base: f64) -> (f64, f64) {
        let p = self.p();
        let (m, b) = octave(u / base);
        let scale = 4f64.powi(p * m) * base.powi(p);
        let value = scale * (1.0 + self.unit_slope() * (b - 1.0));
        let slope = 4f64.powi((p - 1) * m) * base.powi(p - 1) * self.unit_slope();
        (value, slope)
    }

    pub fn alpha(&self, u: f64) -> Result<f64> {
        self.check_range(u, self.s(self.n_min - 1), self.s(self.n_max + 1))?;
        Ok(self.interpolant(u, 1.0).0)
    }

    pub fn beta(&self, u: f64) -> Result<f64> {
        self.check_range(u, self.t(self.n_min - 1), self.t(self.n_max))?;
        Ok(self.interpolant(u, self.r).0)
    }

    /// `alpha'(u+)`.
    pub fn alpha_slope(&self, u: f64) -> Result<f64> {
        self.check_range(u, self.s(self.n_min - 1), self.s(self.n_max + 1))?;
        Ok(self.interpolant(u, 1.0).1)
    }

    /// `beta'(u+)`.
    pub fn beta_slope(&self, u: f64) -> Result<f64> {
        self.check_range(u, self.t(self.n_min - 1), self.t(self.n_max))?;
        Ok(self.interpolant(u, self.r).1)
    }

    /// `alpha'(u-)`: the slope of the piece ending at `u`.
    fn alpha_slope_left(&self, u: f64) -> f64 {
        self.interpolant(u * (1.0 - 1e-12), 1.0).1
    }

    fn beta_slope_left(&self, u: f64) -> f64 {
        self.interpolant(u * (1.0 - 1e-12), self.r).1
    }
}

/// `(m, u / 4^m)` with `4^m <= u < 4^(m+1)`, computed with exact powers.
fn octave(u: f64) -> (i32, f64) {
    let mut m = (u.log2() / 2.0).floor() as i32;
    while 4f64.powi(m) > u {
        m -= 1;
    }
    while 4f64.powi(m + 1) <= u {
        m += 1;
    }
    (m, u / 4f64.powi(m))
}

fn factorial_ratio(i: usize, l: usize) -> f64 {
    (i - l + 1..=i).map(|x| x as f64).product()
}

#[derive(Debug, Clone, PartialEq)]
struct Piece {
    a: f64,
    h: f64,
    /// Coefficients in the local variable `(u - a)/h`.
    c: Vec<f64>,
}

impl Piece {
    fn derivative(&self, u: f64, order: usize) -> f64 {
        let x = (u - self.a) / self.h;
        let mut acc = 0.0;
        for i in (order..self.c.len()).rev() {
            acc = acc * x + self.c[i] * factorial_ratio(i, order);
        }
        acc / self.h.powi(order as i32)
    }

    /// Bound on `|derivative|` over the piece, the scale of its roundoff.
    fn derivative_bound(&self, order: usize) -> f64 {
        let sum: f64 = (order..self.c.len()).map(|i| self.c[i].abs() * factorial_ratio(i, order)).sum();
        sum / self.h.powi(order as i32)
    }
}

/// Achieved smoothness and the inequality audit of the base spline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiAudit {
    /// Worst condition number over the four Hermite systems.
    pub condition_number: f64,
    pub audit_points: usize,
    /// `min (min(alpha, beta) - phi)` off the contact points.
    pub min_gap: f64,
    /// `min (min(alpha, beta) - phi) / d^2`, `d` the distance to the nearest
    /// contact: a curvature certificate that the gap cannot close between
    /// audit points.
    pub min_gap_over_dist2: f64,
    /// `max |phi''|` on `[1, 4]`.
    pub max_abs_phi2: f64,
    /// Largest derivative order continuous at every knot and across the
    /// self-similar gluing, up to `SMOOTHNESS_TOL` relative to a bound on
    /// that derivative.
    pub smoothness: u32,
    /// Relative jump of the first discontinuous derivative.
    pub first_jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    spec: CounterexampleSpec,
    pieces: Vec<Piece>,
    pub audit: PhiAudit,
}

impl PhiFunction {
    pub fn spec(&self) -> &CounterexampleSpec {
        &self.spec
    }

    fn base_derivative(&self, u: f64, order: usize) -> f64 {
        let piece = self.pieces.iter().rev().find(|pc| u >= pc.a).unwrap_or(&self.pieces[0]);
        piece.derivative(u, order)
    }

    /// `phi^(order)(u)` for `u > 0`.
    pub fn derivative(&self, u: f64, order: usize) -> Result<f64> {
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::Precondition(format!("phi is evaluated at u > 0, got {u}")));
        }
        let (m, b) = octave(u);
        let p = self.spec.p();
        Ok(4f64.powi((p - order as i32) * m) * self.base_derivative(b, order))
    }

    pub fn value(&self, u: f64) -> Result<f64> {
        self.derivative(u, 0)
    }

    /// `F(u) = -phi''(u)`; 0 at `u = 0`, the limit value.
    pub fn force(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(-self.derivative(u, 2)?)
    }
}

/// Hermite data `[f, f', ..., f^(p)]` at one knot.
fn hermite_piece(a: f64, b: f64, left: &[f64], right: &[f64]) -> Result<(Piece, f64)> {
    let q = left.len();
    let h = b - a;
    let n = 2 * q;
    let mut c = vec![0.0; n];
    for (l, &d) in left.iter().enumerate() {
        c[l] = d * h.powi(l as i32) / factorial_ratio(l, l);
    }
    // At x = 1: sum_i c_i i!/(i-l)! = d_l h^l for each l; move the known
    // lower coefficients to the right-hand side.
    let mut m_upper = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for l in 0..q {
        let mut r = right[l] * h.powi(l as i32);
        for i in l..q {
            r -= c[i] * factorial_ratio(i, l);
        }
        rhs[l] = r;
        for i in q..n {
            m_upper[(l, i - q)] = factorial_ratio(i, l);
        }
    }
    let sol = m_upper
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Construction(format!("singular Hermite system on [{a}, {b}]")))?;
    c[q..].copy_from_slice(sol.as_slice());

    let mut full = DMatrix::<f64>::zeros(n, n);
    for l in 0..q {
        full[(l, l)] = factorial_ratio(l, l);
        for i in l..n {
            full[(q + l, i)] = factorial_ratio(i, l);
        }
    }
    let sv = full.singular_values();
    let cond = sv.max() / sv.min();
    Ok((Piece { a, h, c }, cond))
}

/// Builds `phi` and audits it. Fails if the strict inequality below the
/// envelope does not hold on the audit grid.
pub fn build_phi(spec: &CounterexampleSpec) -> Result<PhiFunction> {
    let p = spec.p();
    let q = p as usize + 1;
    let r = spec.r;
    let a1 = spec.unit_slope();
    let slope_r = r.powi(p - 1) * a1;
    let beta_at_1 = spec.interpolant(1.0, r).0;
    let beta_slope_at_1 = spec.interpolant(1.0, r).1;
    let alpha_at_r = spec.interpolant(r, 1.0).0;
    let kappa1 = KAPPA_FACTOR * (a1 - beta_slope_at_1).powi(2) / (2.0 * (beta_at_1 - 1.0));
    let kappa2 = KAPPA_FACTOR * (slope_r - a1).powi(2) / (2.0 * (alpha_at_r - r.powi(p)));

    let data = |v: f64, s: f64, curv: f64| {
        let mut d = vec![0.0; q];
        d[0] = v;
        d[1] = s;
        d[2] = -curv;
        d
    };
    let d1 = data(1.0, a1, kappa1);
    let dr = data(r.powi(p), slope_r, kappa2);
    let d4: Vec<f64> = d1.iter().enumerate().map(|(l, &v)| 4f64.powi(p - l as i32) * v).collect();
    let mut flat = vec![0.0; q];
    flat[0] = INTERIOR_LEVEL * 4f64.powi(p);
    let m1 = 0.5 * (1.0 + r);
    let m2 = 0.5 * (r + 4.0);

    let mut pieces = Vec::with_capacity(4);
    let mut cond: f64 = 0.0;
    for (a, b, left, right) in [(1.0, m1, &d1, &flat), (m1, r, &flat, &dr), (r, m2, &dr, &flat), (m2, 4.0, &flat, &d4)] {
        let (piece, c) = hermite_piece(a, b, left, right)?;
        cond = cond.max(c);
        pieces.push(piece);
    }
    let mut phi = PhiFunction {
        spec: *spec,
        pieces,
        audit: PhiAudit {
            condition_number: cond,
            audit_points: 0,
            min_gap: 0.0,
            min_gap_over_dist2: 0.0,
            max_abs_phi2: 0.0,
            smoothness: 0,
            first_jump: 0.0,
        },
    };
    audit_phi(&mut phi)?;
    Ok(phi)
}

/// Relative derivative jump regarded as a discontinuity.
const SMOOTHNESS_TOL: f64 = 1e-6;
/// Points per octave of the inequality audit.
const AUDIT_PER_OCTAVE: usize = 10_000;

fn audit_phi(phi: &mut PhiFunction) -> Result<()> {
    let spec = phi.spec;
    let contacts = [1.0, spec.r, 4.0];
    let n = 2 * AUDIT_PER_OCTAVE;
    let mut min_gap = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut max_phi2: f64 = 0.0;
    for i in 0..=n {
        let u = 1.0 + 3.0 * i as f64 / n as f64;
        let f = phi.value(u)?;
        max_phi2 = max_phi2.max(phi.base_derivative(u, 2).abs());
        let env = spec.interpolant(u, 1.0).0.min(spec.interpolant(u, spec.r).0);
        let gap = env - f;
        let dist = contacts.iter().map(|c| (u - c).abs()).fold(f64::INFINITY, f64::min);
        if dist == 0.0 {
            if gap != 0.0 {
                return Err(Error::Construction(format!("contact condition phi(u) = envelope violated at u = {u} (gap {gap})")));
            }
            continue;
        }
        if gap <= 0.0 {
            return Err(Error::Construction(format!("strict inequality phi < min(alpha, beta) violated at u = {u} (gap {gap})")));
        }
        min_gap = min_gap.min(gap);
        min_ratio = min_ratio.min(gap / (dist * dist));
    }

    // Smoothness: derivative jumps at interior knots and across the gluing
    // point 4 (left limit of the base at 4 against the scaled right limit).
    let p = spec.p() as usize;
    let mut smoothness = None;
    let mut first_jump = 0.0;
    for order in 0..=p + 1 {
        let mut pairs: Vec<(f64, f64)> = phi
            .pieces
            .windows(2)
            .map(|w| (w[0].derivative(w[1].a, order), w[1].derivative(w[1].a, order)))
            .collect();
        pairs.push((
            phi.pieces[3].derivative(4.0, order),
            4f64.powi(spec.p() - order as i32) * phi.pieces[0].derivative(1.0, order),
        ));
        // Jumps are measured against the coefficient bound of this
        // derivative, which is what the roundoff of the Hermite solve scales with.
        let scale = phi.pieces.iter().fold(1.0f64, |m, pc| m.max(pc.derivative_bound(order)));
        let worst = pairs.iter().fold(0.0f64, |m, &(l, r)| m.max((l - r).abs() / scale));
        if worst > SMOOTHNESS_TOL && smoothness.is_none() {
            smoothness = Some(order as u32 - 1);
            first_jump = worst;
        }
    }
    phi.audit.audit_points = n + 1;
    phi.audit.min_gap = min_gap;
    phi.audit.min_gap_over_dist2 = min_ratio;
    phi.audit.max_abs_phi2 = max_phi2;
    phi.audit.smoothness = smoothness.unwrap_or(p as u32 + 1);
    phi.audit.first_jump = first_jump;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Alpha,
    Beta,
}

/// `X = alpha - phi + shift` (or with `beta`). A nonzero shift is only useful
/// to check that the verifier notices a broken contact.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub phi: &'a PhiFunction,
    pub branch: Branch,
    pub shift: f64,
}

/// A trajectory with a force and contact nodes, checked by
/// [`verify_inclusion`].
pub trait InclusionProblem {
    fn position(&self, u: f64) -> Result<f64>;
    /// Right velocity.
    fn velocity(&self, u: f64) -> Result<f64>;
    fn velocity_left(&self, u: f64) -> Result<f64>;
    /// Analytic second derivative away from the nodes.
    fn acceleration(&self, u: f64) -> Result<f64>;
    fn force(&self, u: f64) -> Result<f64>;
    /// Jump of `A` at a node.
    fn a_jump(&self, u: f64) -> Result<f64>;
    fn nodes(&self, lo: f64, hi: f64) -> Vec<f64>;
}

impl<'a> Candidate<'a> {
    pub fn new(phi: &'a PhiFunction, branch: Branch) -> Self {
        Candidate { phi, branch, shift: 0.0 }
    }

    pub fn shifted(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    fn envelope(&self, u: f64) -> Result<f64> {
        let spec = self.phi.spec();
        match self.branch {
            Branch::Alpha => spec.alpha(u),
            Branch::Beta => spec.beta(u),
        }
    }

    fn envelope_slope(&self, u: f64) -> Result<f64> {
        let spec = self.phi.spec();
        match self.branch {
            Branch::Alpha => spec.alpha_slope(u),
            Branch::Beta => spec.beta_slope(u),
        }
    }

    fn envelope_slope_left(&self, u: f64) -> f64 {
        let spec = self.phi.spec();
        match self.branch {
            Branch::Alpha => spec.alpha_slope_left(u),
            Branch::Beta => spec.beta_slope_left(u),
        }
    }
}

impl InclusionProblem for Candidate<'_> {
    fn position(&self, u: f64) -> Result<f64> {
        Ok(self.envelope(u)? - self.phi.value(u)? + self.shift)
    }

    fn velocity(&self, u: f64) -> Result<f64> {
        Ok(self.envelope_slope(u)? - self.phi.derivative(u, 1)?)
    }

    fn velocity_left(&self, u: f64) -> Result<f64> {
        Ok(self.envelope_slope_left(u) - self.phi.derivative(u, 1)?)
    }

    fn acceleration(&self, u: f64) -> Result<f64> {
        // The envelope is linear between nodes.
        Ok(-self.phi.derivative(u, 2)?)
    }

    fn force(&self, u: f64) -> Result<f64> {
        self.phi.force(u)
    }

    fn a_jump(&self, u: f64) -> Result<f64> {
        Ok(self.envelope_slope(u)? - self.envelope_slope_left(u))
    }

    fn nodes(&self, lo: f64, hi: f64) -> Vec<f64> {
        let spec = self.phi.spec();
        (spec.n_min - 1..=spec.n_max)
            .map(|n| match self.branch {
                Branch::Alpha => spec.s(n),
                Branch::Beta => spec.t(n),
            })
            .filter(|&u| u >= lo && u <= hi)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionReport {
    pub tol: f64,
    pub grid_points: usize,
    pub nodes: usize,
    /// (a) `max(0, -min X)`.
    pub nonnegativity: f64,
    /// (b) `max |X(node)| + |X'(node+)|`.
    pub contact: f64,
    /// (c) `max |X'' - F|` away from nodes, analytic.
    pub free_flight: f64,
    /// (d) `max |jump of A + incoming velocity|`.
    pub impact_law: f64,
    /// Diagnostic: `max |second difference of X - F| / max |F|` on the grid,
    /// stencils straddling a node skipped.
    pub free_flight_fd_rel: f64,
    pub pass: bool,
    /// Name and location of each check over tolerance.
    pub failures: Vec<String>,
}

/// Checks (a)-(d) on a uniform grid of `[lo, hi]` with step `h`.
pub fn verify_inclusion(x: &dyn InclusionProblem, lo: f64, hi: f64, h: f64, tol: f64) -> Result<InclusionReport> {
    if !(lo > 0.0 && hi > lo && h > 0.0) {
        return Err(Error::Precondition(format!("bad verification grid [{lo}, {hi}] step {h}")));
    }
    let n = ((hi - lo) / h).round() as usize;
    let nodes = x.nodes(lo, hi);
    let near_node = |u: f64| nodes.iter().any(|&s| (u - s).abs() < 1.5 * h);
    let mut failures = Vec::new();
    let mut wrong_side = Vec::new();
    let mut worst = |name: &str, value: f64, at: f64, current: &mut f64| {
        if value > *current {
            *current = value;
        }
        if value > tol && !failures.iter().any(|f: &String| f.starts_with(name)) {
            failures.push(format!("{name}: residual {value:e} at u = {at}"));
        }
    };

    let (mut res_a, mut res_b, mut res_c, mut res_d, mut fd) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let mut f_scale = 1.0f64;
    let xs: Vec<f64> = (0..=n).map(|i| x.position(lo + i as f64 * h)).collect::<Result<_>>()?;
    for (i, &xi) in xs.iter().enumerate() {
        let u = lo + i as f64 * h;
        worst("(a) nonnegativity", (-xi).max(0.0), u, &mut res_a);
        if !near_node(u) {
            let acc = x.acceleration(u)?;
            let f = x.force(u)?;
            worst("(c) free flight", (acc - f).abs(), u, &mut res_c);
            if i > 0 && i < n {
                let d2 = (xs[i + 1] - 2.0 * xi + xs[i - 1]) / (h * h);
                fd = fd.max((d2 - f).abs());
                f_scale = f_scale.max(f.abs());
            }
        }
    }
    for &s in &nodes {
        let pos = x.position(s)?;
        let v_out = x.velocity(s)?;
        worst("(b) contact", pos.abs() + v_out.abs(), s, &mut res_b);
        let v_in = x.velocity_left(s)?;
        // Only an actual impact (v_in < 0) is bound by the impact law.
        let jump = x.a_jump(s)?;
        worst("(d) impact law", (jump + v_in).abs(), s, &mut res_d);
        if v_in >= 0.0 {
            wrong_side.push(format!("(d) impact law: incoming velocity {v_in} >= 0 at u = {s}"));
        }
    }
    failures.extend(wrong_side);
    let fd = fd / f_scale;
    Ok(InclusionReport {
        tol,
        grid_points: n + 1,
        nodes: nodes.len(),
        nonnegativity: res_a,
        contact: res_b,
        free_flight: res_c,
        impact_law: res_d,
        free_flight_fd_rel: fd,
        pass: failures.is_empty(),
        failures,
    })
}

/// `sup |X_alpha - X_beta|` on a grid of `[lo, hi]`, with its location.
pub fn divergence(phi: &PhiFunction, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
    let xa = Candidate::new(phi, Branch::Alpha);
    let xb = Candidate::new(phi, Branch::Beta);
    let mut best = (0.0, lo);
    for i in 0..points {
        let u = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let d = (xa.position(u)? - xb.position(u)?).abs();
        if d > best.0 {
            best = (d, u);
        }
    }
    Ok(best)
}

/// One row of the exported table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub u: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub force: f64,
    pub x_alpha: f64,
    pub x_beta: f64,
}

/// `(u, alpha, beta, phi, F, X_alpha, X_beta)` on `points` uniform points of
/// `[lo, hi]`.
pub fn curves(phi: &PhiFunction, lo: f64, hi: f64, points: usize) -> Result<Vec<CurveRow>> {
    let spec = phi.spec();
    (0..points)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64;
            let (a, b, f) = (spec.alpha(u)?, spec.beta(u)?, phi.value(u)?);
            Ok(CurveRow { u, alpha: a, beta: b, phi: f, force: phi.force(u)?, x_alpha: a - f, x_beta: b - f })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate_deterministic, IntegratorConfig};
    use proptest::prelude::*;

    fn k1() -> (CounterexampleSpec, PhiFunction) {
        let spec = CounterexampleSpec::new(1, 0, 1).unwrap();
        let phi = build_phi(&spec).unwrap();
        (spec, phi)
    }

    #[test]
    fn node_interpolants_for_k1() {
        let spec = CounterexampleSpec::new(1, -2, 3).unwrap();
        assert_eq!(spec.alpha(1.0).unwrap(), 1.0);
        assert_eq!(spec.alpha(4.0).unwrap(), 256.0);
        assert_eq!(spec.alpha(2.0).unwrap(), 86.0);
        assert_eq!(spec.beta(2.0).unwrap(), 16.0);
        assert_eq!(spec.beta(8.0).unwrap(), 4096.0);
        assert_eq!(spec.alpha_slope(1.0).unwrap(), 85.0);
        assert_eq!(spec.beta_slope(2.0).unwrap(), 680.0);
        assert!(spec.alpha(1e6).is_err());
        assert!(spec.alpha(0.0).is_err());
        for n in -2..=3 {
            assert_eq!(spec.alpha(spec.s(n)).unwrap(), spec.s(n).powi(4));
            assert!(spec.s(n) < spec.t(n) && spec.t(n) < spec.s(n + 1));
        }
    }

    #[test]
    fn interpolants_are_convex() {
        let spec = CounterexampleSpec::new(1, -2, 3).unwrap();
        let mut prev = 0.0;
        for i in 1..2000 {
            let u = 0.1 + i as f64 * 0.1;
            if u > 64.0 {
                break;
            }
            let s = spec.alpha_slope(u).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn contact_values_and_slopes_for_k1() {
        let (_, phi) = k1();
        assert_eq!(phi.value(1.0).unwrap(), 1.0);
        assert_eq!(phi.value(2.0).unwrap(), 16.0);
        assert_eq!(phi.derivative(1.0, 1).unwrap(), 85.0);
        assert_eq!(phi.derivative(2.0, 1).unwrap(), 680.0);
        assert_eq!(phi.value(4.0).unwrap(), 256.0);
    }

    #[test]
    fn self_similar_extension_is_exact() {
        let (_, phi) = k1();
        let f2 = phi.value(2.0).unwrap();
        for m in 1..=5 {
            let u = 4f64.powi(-m) * 2.0;
            assert_eq!(phi.value(u).unwrap(), 4f64.powi(-4 * m) * f2);
        }
        for &u in &[1.1, 1.7, 2.5, 3.9] {
            for octave in -3..3 {
                let s = 4f64.powi(octave);
                assert_eq!(phi.value(4.0 * s * u).unwrap(), 256.0 * phi.value(s * u).unwrap());
                assert_eq!(phi.force(4.0 * s * u).unwrap(), 16.0 * phi.force(s * u).unwrap());
            }
        }
    }

    #[test]
    fn force_oscillates_and_vanishes_at_zero() {
        let (_, phi) = k1();
        let fs: Vec<f64> = (0..=3000).map(|i| phi.force(1.0 + i as f64 * 1e-3).unwrap()).collect();
        assert!(fs.iter().any(|&f| f > 0.0) && fs.iter().any(|&f| f < 0.0));
        assert_eq!(phi.force(0.0).unwrap(), 0.0);
        assert!(phi.force(-1.0).is_err());
        // |F(u)| <= C u^(p-2) with C = max over the base interval times 4^(p-2).
        let c = fs.iter().fold(0.0f64, |m, f| m.max(f.abs())) * 16.0;
        for m in 1..6 {
            for &b in &[1.0, 1.3, 2.0, 3.7] {
                let u = b * 4f64.powi(-m);
                assert!(phi.force(u).unwrap().abs() <= c * u * u * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn candidates_touch_zero_at_their_nodes() {
        let spec = CounterexampleSpec::new(1, -2, 2).unwrap();
        let phi = build_phi(&spec).unwrap();
        let xa = Candidate::new(&phi, Branch::Alpha);
        let xb = Candidate::new(&phi, Branch::Beta);
        for n in -2..2 {
            assert_eq!(xa.position(spec.s(n)).unwrap(), 0.0);
            assert_eq!(xb.position(spec.t(n)).unwrap(), 0.0);
        }
        assert_eq!(xa.position(2.0).unwrap(), 70.0);
        assert_eq!(xb.position(2.0).unwrap(), 0.0);
        for i in 0..=4000 {
            let u = 1.0 / 16.0 + i as f64 * (16.0 - 1.0 / 16.0) / 4000.0;
            assert!(xa.position(u).unwrap() >= 0.0 && xb.position(u).unwrap() >= 0.0);
        }
    }

    #[test]
    fn both_candidates_solve_the_inclusion() {
        let (_, phi) = k1();
        for branch in [Branch::Alpha, Branch::Beta] {
            let rep = verify_inclusion(&Candidate::new(&phi, branch), 1.0, 4.0, 1e-4, 1e-6).unwrap();
            assert!(rep.pass, "{branch:?}: {rep:?}");
            assert_eq!(rep.contact, 0.0);
            assert_eq!(rep.impact_law, 0.0);
            assert!(rep.free_flight_fd_rel < 1e-4, "{rep:?}");
        }
    }

    #[test]
    fn shifted_candidate_fails_contact() {
        let (_, phi) = k1();
        let rep = verify_inclusion(&Candidate::new(&phi, Branch::Alpha).shifted(1e-3), 1.0, 4.0, 1e-3, 1e-6).unwrap();
        assert!(!rep.pass);
        assert!(rep.failures.iter().any(|f| f.starts_with("(b) contact")), "{:?}", rep.failures);
    }

    struct Rest;

    impl InclusionProblem for Rest {
        fn position(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn velocity(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn velocity_left(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn acceleration(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn force(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn a_jump(&self, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn nodes(&self, _: f64, _: f64) -> Vec<f64> {
            Vec::new()
        }
    }

    #[test]
    fn rest_state_has_zero_residuals() {
        let rep = verify_inclusion(&Rest, 1.0, 2.0, 1e-3, 1e-6).unwrap();
        assert!(rep.pass);
        assert_eq!((rep.nonnegativity, rep.contact, rep.free_flight, rep.impact_law), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn divergence_for_k1() {
        let (spec, phi) = k1();
        let (sup, _) = divergence(&phi, 1.0, 4.0, 30_001).unwrap();
        assert!(sup >= 70.0);
        let xa = Candidate::new(&phi, Branch::Alpha);
        let xb = Candidate::new(&phi, Branch::Beta);
        assert_eq!(xa.position(2.0).unwrap() - xb.position(2.0).unwrap(), 70.0);
        for n in 0..=1 {
            let s = spec.s(n);
            let gap = xb.position(s).unwrap() - xa.position(s).unwrap();
            assert_eq!(gap, spec.beta(s).unwrap() - spec.alpha(s).unwrap());
            assert!(gap >= 0.0);
        }
    }

    #[test]
    fn degenerate_nodes_are_rejected() {
        assert!(matches!(CounterexampleSpec::with_ratio(1, 1.0, 0, 1), Err(Error::Construction(_))));
        assert!(CounterexampleSpec::with_ratio(1, 4.0, 0, 1).is_err());
        assert!(CounterexampleSpec::new(5, 0, 1).is_err());
        assert!(CounterexampleSpec::new(1, -6, 1).is_err());
    }

    #[test]
    fn every_supported_k_builds_with_reported_smoothness() {
        for k in 0..=K_MAX {
            let spec = CounterexampleSpec::new(k, 0, 1).unwrap();
            let phi = build_phi(&spec).unwrap();
            let a = &phi.audit;
            assert!(a.min_gap > 0.0 && a.min_gap_over_dist2 > 0.0, "k = {k}: {a:?}");
            assert_eq!(a.smoothness, k + 3, "k = {k}: {a:?}");
            assert!(a.condition_number.is_finite());
            for branch in [Branch::Alpha, Branch::Beta] {
                let rep = verify_inclusion(&Candidate::new(&phi, branch), 1.0, 4.0, 1e-3, 1e-6).unwrap();
                assert!(rep.pass, "k = {k} {branch:?}: {:?}", rep.failures);
            }
        }
    }

    #[test]
    fn integrator_tracks_the_alpha_branch() {
        let (_, phi) = k1();
        let phi = std::sync::Arc::new(phi);
        let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&dt| {
                let f = phi.clone();
                let cfg = IntegratorConfig::deterministic(dt, 3.0, move |t| f.force(1.0 + t).unwrap());
                let tr = simulate_deterministic(&cfg).unwrap();
                let xa = Candidate::new(&phi, Branch::Alpha);
                (0..tr.x.len())
                    .map(|k| (tr.x.at(k) - xa.position(1.0 + tr.grid().time(k)).unwrap()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 1e-2 * 70.0, "{errs:?}");
    }

    proptest! {
        #[test]
        fn phi_stays_below_the_envelope(u in 0.0625f64..64.0) {
            let spec = CounterexampleSpec::new(1, -2, 3).unwrap();
            let phi = build_phi(&spec).unwrap();
            let env = spec.alpha(u).unwrap().min(spec.beta(u).unwrap());
            prop_assert!(phi.value(u).unwrap() <= env);
        }
    }
}

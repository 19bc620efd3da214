//! Rebuilding a driving Brownian motion from a solution `(X, B)` and an
//! independent Brownian motion `B'`.
//!
//! With `sigma'(x)` the first passage of `B'` at level `x`, the clock
//! `T_t = t + sigma'(A_t)` inserts a stretch of `B'` each time `A` jumps. Its
//! inverse `tau` and the complement `tau'(t) = t - tau(t)` splice the two
//! motions together:
//!
//! ```text
//! W_t = B_{tau(t)} + B'_{tau'(t)}
//! ```
//!
//! On the grid `T_j = j + sigma(A_j)` in cells, where `sigma` is the first
//! index with `B' >= x` (see [`crate::construction::first_passage_index_from`]).
//! Original cell `T_j` carries the clock increment `B_{j+1} - B_j`; every
//! other cell carries the next unused increment of `B'`.
//!
//! `sigma'` is heavy-tailed, so `B'` is a [`DualPath`] that is sampled lazily
//! and extended on demand up to a hard cap. Callers that only need `W` on a
//! fixed window of original time use [`build_recovery_window`], which never
//! reads `B'` beyond that window.

use serde::Serialize;

use crate::construction::{first_passage_index_from, integrate_left, running_infimum, FirstPassage, TimeChange};
use crate::error::{Error, Result};
use crate::grid_slack;
use crate::paths::{NormalSource, RngStream, SamplePath, TimeGrid};

/// The auxiliary Brownian motion, either fully given or generated lazily.
#[derive(Debug, Clone)]
pub struct DualPath {
    dt: f64,
    values: Vec<f64>,
    normals: Option<NormalSource>,
    cap: usize,
}

impl DualPath {
    /// A fixed, finite path. Searches past its end are horizon errors.
    pub fn fixed(bp: &SamplePath) -> DualPath {
        DualPath { dt: bp.dt(), values: bp.values().to_vec(), normals: None, cap: bp.len() }
    }

    /// A Brownian motion drawn from `stream` in blocks, up to `cap_steps`
    /// steps. Extension is prefix-consistent: the values never depend on
    /// how far the path has been extended.
    pub fn lazy(stream: RngStream, dt: f64, cap_steps: usize) -> DualPath {
        DualPath { dt, values: vec![0.0], normals: Some(stream.normals()), cap: cap_steps + 1 }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of points generated so far.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Extends to at least `len` points when allowed. Returns whether the
    /// path now has that many points.
    fn ensure(&mut self, len: usize) -> bool {
        let target = len.min(self.cap);
        if let Some(normals) = self.normals.as_mut() {
            let sd = self.dt.sqrt();
            let mut w = *self.values.last().expect("dual path is never empty");
            while self.values.len() < target {
                w += sd * normals.next_normal();
                self.values.push(w);
            }
        }
        self.values.len() >= len
    }

    /// First index `i >= from` with `B'_i >= x`, looking no further than
    /// `limit` when one is given. `Ok(None)` means "not within the limit"; a
    /// search that runs into the cap is a horizon error.
    pub fn first_passage_index(&mut self, x: f64, from: usize, limit: Option<usize>) -> Result<Option<usize>> {
        let mut start = from;
        let mut block = 1024usize;
        loop {
            let end = match limit {
                Some(l) => (start + block).min(l + 1),
                None => start + block,
            };
            let available = self.ensure(end);
            let upto = end.min(self.values.len());
            if start < upto {
                if let Some(i) = first_passage_index_from(&self.values[..upto], x, start) {
                    return Ok(Some(i));
                }
            }
            if limit.is_some_and(|l| upto > l) {
                return Ok(None);
            }
            if !available {
                return Err(Error::Horizon(format!(
                    "insufficient B' horizon: level {x} not reached within {} steps",
                    self.values.len() - 1
                )));
            }
            start = upto;
            block = block.saturating_mul(2);
        }
    }

    /// Values `0..=n` as a path; extends as needed.
    pub fn prefix(&mut self, n: usize) -> Result<SamplePath> {
        if !self.ensure(n + 1) {
            return Err(Error::Horizon(format!("dual path shorter than {n} steps")));
        }
        SamplePath::new(TimeGrid::new(0.0, self.dt, n)?, self.values[..=n].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryArtifacts {
    pub dt: f64,
    /// `sigma'(A_j)` for every clock index whose `T_j` was computed.
    pub sigma_prime: FirstPassage,
    sigma_index: Vec<usize>,
    /// `T_j` in cells.
    pub t_index: Vec<usize>,
    /// `tau` at every point of the recovered grid, in cells.
    pub tau_index: Vec<usize>,
    /// Clock times at which `A` jumps.
    pub d_a: Vec<f64>,
    pub w: SamplePath,
    /// Open intervals of original time where the splice follows `B'` after
    /// a jump of `A`.
    pub o: Vec<(f64, f64)>,
}

impl RecoveryArtifacts {
    pub fn tau_at(&self, i: usize) -> f64 {
        self.tau_index[i] as f64 * self.dt
    }

    pub fn tau_prime_at(&self, i: usize) -> f64 {
        (i - self.tau_index[i]) as f64 * self.dt
    }

    pub fn t_at(&self, j: usize) -> f64 {
        self.t_index[j] as f64 * self.dt
    }
}

fn check_trace(a: &SamplePath, b: &SamplePath) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::InvalidGrid("A and B are not aligned".into()));
    }
    if let Some(j) = a.values().windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Precondition(format!("A decreases at clock index {j}")));
    }
    if b.at(0) != 0.0 {
        return Err(Error::Precondition("B must start at 0".into()));
    }
    Ok(())
}

fn check_velocity_identity(v: &SamplePath, a: &SamplePath, b: &SamplePath) -> Result<()> {
    for k in 0..v.len() {
        let r = (v.at(k) - (b.at(k) + a.at(k))).abs();
        if r > 1e-9 * (1.0 + v.at(k).abs()) {
            return Err(Error::Precondition(format!("V != B + A at clock index {k} (residual {r})")));
        }
    }
    Ok(())
}

/// Splice of `B` and the dual path under the clock built from `a`.
/// `limit` bounds the recovered grid to `limit` cells.
fn splice(a: &[f64], b: &[f64], dual: &mut DualPath, dt: f64, limit: Option<usize>) -> Result<RecoveryArtifacts> {
    let n = a.len() - 1;
    let mut t_index = Vec::with_capacity(n + 1);
    let mut sigma_index = Vec::with_capacity(n + 1);
    let mut from = 0;
    for (j, &level) in a.iter().enumerate() {
        let lim = limit.map(|l| l.saturating_sub(j));
        match dual.first_passage_index(level, from, lim)? {
            Some(s) => {
                from = s;
                sigma_index.push(s);
                t_index.push(j + s);
            }
            None => break,
        }
        if limit.is_some_and(|l| j + from >= l) {
            break;
        }
    }
    let total = match limit {
        Some(l) => {
            let reached = t_index.last().is_some_and(|&t| t >= l);
            if !reached && t_index.len() == n + 1 {
                return Err(Error::Horizon(format!("trace clock ends at original time {} before the window", t_index[n] as f64 * dt)));
            }
            l
        }
        None => t_index[n],
    };
    // Clock cells are the T_j below `total`, except the final point of a
    // full recovery, which closes the grid rather than opening a cell.
    let clock_cells: Vec<usize> = t_index.iter().take(n).copied().filter(|&t| t < total).collect();
    let dual_cells = total - clock_cells.len();
    if !dual.ensure(dual_cells + 1) {
        return Err(Error::Horizon(format!("insufficient B' horizon: {dual_cells} dual steps needed")));
    }
    let mut tau_index = Vec::with_capacity(total + 1);
    let mut w = Vec::with_capacity(total + 1);
    let mut c = 0;
    for i in 0..=total {
        tau_index.push(c);
        w.push(b[c] + dual.at(i - c));
        if c < clock_cells.len() && clock_cells[c] == i {
            c += 1;
        }
    }

    let d_a: Vec<f64> = (0..n).filter(|&j| a[j + 1] > a[j]).map(|j| (j + 1) as f64 * dt).collect();
    let m = sigma_index.len();
    let o = (0..m.saturating_sub(1))
        .filter(|&j| sigma_index[j + 1] > sigma_index[j])
        .map(|j| (((j + 1) + sigma_index[j]) as f64 * dt, t_index[j + 1] as f64 * dt))
        .collect::<Vec<_>>();
    // A window that ends while the splice is still following B' cuts the
    // last interval short.
    let mut o = o;
    if m < n + 1 && m > 0 && a[m] > a[m - 1] && m + sigma_index[m - 1] < total {
        o.push(((m + sigma_index[m - 1]) as f64 * dt, total as f64 * dt));
    }
    let sigma_prime = FirstPassage {
        levels: a[..m].to_vec(),
        times: sigma_index.iter().map(|&s| s as f64 * dt).collect(),
    };
    Ok(RecoveryArtifacts {
        dt,
        sigma_prime,
        sigma_index,
        t_index,
        tau_index,
        d_a,
        w: SamplePath::new(TimeGrid::new(0.0, dt, total)?, w)?,
        o,
    })
}

/// Full recovery: `W` on `[0, T(t_max)]`.
pub fn build_recovery(x: &SamplePath, v: &SamplePath, a: &SamplePath, b: &SamplePath, dual: &mut DualPath) -> Result<RecoveryArtifacts> {
    check_inputs(x, v, a, b, dual)?;
    splice(a.values(), b.values(), dual, a.dt(), None)
}

/// Recovery of `W` on the original-time window `[0, window]` only.
pub fn build_recovery_window(
    x: &SamplePath,
    v: &SamplePath,
    a: &SamplePath,
    b: &SamplePath,
    dual: &mut DualPath,
    window: f64,
) -> Result<RecoveryArtifacts> {
    check_inputs(x, v, a, b, dual)?;
    let steps = (window / a.dt()).round() as usize;
    splice(a.values(), b.values(), dual, a.dt(), Some(steps))
}

fn check_inputs(x: &SamplePath, v: &SamplePath, a: &SamplePath, b: &SamplePath, dual: &DualPath) -> Result<()> {
    if x.grid() != a.grid() || v.grid() != a.grid() {
        return Err(Error::InvalidGrid("X, V, A, B are not aligned".into()));
    }
    if (dual.dt() - a.dt()).abs() > 1e-15 * a.dt() {
        return Err(Error::InvalidGrid("B' must share the trace's step".into()));
    }
    check_trace(a, b)?;
    check_velocity_identity(v, a, b)
}

/// Grid version of `sigma'`, searching a dual path.
pub fn first_passage(dual: &mut DualPath, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Precondition(format!("first-passage level must be >= 0, got {x}")));
    }
    let i = dual.first_passage_index(x, 0, None)?.expect("unlimited search returns an index or an error");
    Ok(i as f64 * dual.dt())
}

/// One open interval per jump of `A` that moves `sigma'`:
/// `(t + sigma'(A_{t-}), t + sigma'(A_t))`.
pub fn open_set_o(a: &SamplePath, sigma_prime: &FirstPassage) -> Result<Vec<(f64, f64)>> {
    if a.values().windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("A must be nondecreasing".into()));
    }
    let s = &sigma_prime.times;
    Ok((0..s.len().saturating_sub(1))
        .filter(|&j| a.at(j + 1) > a.at(j) && s[j + 1] > s[j])
        .map(|j| {
            let t = a.time(j + 1);
            (t + s[j], t + s[j + 1])
        })
        .collect())
}

/// Jump steps kept at threshold `epsilon` and the splice they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSplice {
    pub epsilon: f64,
    pub a_eps: SamplePath,
    pub tau_eps: Vec<usize>,
    pub w_eps: SamplePath,
    /// Clock times of the retained jumps, strictly increasing.
    pub jump_times: Vec<f64>,
    /// `A_eps` at the retained jumps.
    pub jump_levels: Vec<f64>,
}

/// Keeps the clock steps whose incoming velocity `V_{j+1} - (A_{j+1} - A_j)`
/// is below `-epsilon`, accumulates their increments of `A` into `A_eps`, and
/// splices as in [`build_recovery`]. With `window` set the splice covers
/// `[0, window]` of original time only.
pub fn epsilon_splice(
    v: &SamplePath,
    a: &SamplePath,
    b: &SamplePath,
    dual: &mut DualPath,
    epsilon: f64,
    window: Option<f64>,
) -> Result<EpsilonSplice> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be > 0, got {epsilon}")));
    }
    check_trace(a, b)?;
    let mut a_eps = Vec::with_capacity(a.len());
    let mut jump_times = Vec::new();
    let mut jump_levels = Vec::new();
    let mut acc = a.at(0);
    a_eps.push(acc);
    for j in 0..a.len() - 1 {
        let da = a.at(j + 1) - a.at(j);
        if da > 0.0 && v.at(j + 1) - da < -epsilon {
            acc += da;
            jump_times.push(a.time(j + 1));
            jump_levels.push(acc);
        }
        a_eps.push(acc);
    }
    let limit = window.map(|w| (w / a.dt()).round() as usize);
    let art = splice(&a_eps, b.values(), dual, a.dt(), limit)?;
    Ok(EpsilonSplice {
        epsilon,
        a_eps: SamplePath::new(*a.grid(), a_eps)?,
        tau_eps: art.tau_index,
        w_eps: art.w,
        jump_times,
        jump_levels,
    })
}

/// `sup |W_eps - W|` over the grid points both paths cover.
pub fn splice_gap(w_eps: &SamplePath, w: &SamplePath) -> f64 {
    w_eps.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop3Report {
    /// `sup_j |X_j - (Y - I)(T_j)|`.
    pub residual_ii: f64,
    /// `sup_j |T_j - T'_j|` where `T'` is the substitution rebuilt from the
    /// recovered `W`.
    pub residual_iii: f64,
    pub clock_points: usize,
}

/// Integrates the recovered `W`, reflects it at its infimum and compares
/// with the solution and with the clock.
pub fn verify_prop3(art: &RecoveryArtifacts, x: &SamplePath) -> Result<Prop3Report> {
    let y = integrate_left(&art.w);
    let inf = running_infimum(&y);
    let tc = crate::construction::build_time_change(&art.w, &y, &inf)?;
    let total = art.w.grid().n();
    let rebuilt = tc.t_index();
    let mut r2: f64 = 0.0;
    let mut r3: usize = 0;
    let mut count = 0;
    for (j, &t) in art.t_index.iter().enumerate() {
        if t > total || j >= x.len() {
            break;
        }
        r2 = r2.max((x.at(j) - (y.at(t) - inf.at(t))).abs());
        if j < rebuilt.len() {
            r3 = r3.max(t.abs_diff(rebuilt[j]));
        }
        count += 1;
    }
    Ok(Prop3Report { residual_ii: r2, residual_iii: r3 as f64 * art.dt, clock_points: count })
}

/// Audit of the open set: `d tau' = 1_O dt` and `W <= 0` on `O`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma4Report {
    pub intervals: usize,
    pub total_length: f64,
    pub tau_prime_end: f64,
    /// `max_s |len(O before s) - tau'(s)|` over the recovered grid.
    pub stieltjes_gap: f64,
    /// Largest `W` at grid points interior to `O`.
    pub max_w_on_o: f64,
    pub slack: f64,
    pub points_checked: usize,
}

pub fn audit_lemma4(art: &RecoveryArtifacts) -> Lemma4Report {
    let dt = art.dt;
    let total = art.w.grid().n();
    // Cells covered by O, plus the stretch of B' before T_0 when A starts
    // above 0.
    let mut in_o = vec![false; total];
    let head = art.t_index.first().copied().unwrap_or(total).min(total);
    in_o[..head].iter_mut().for_each(|c| *c = true);
    let mut max_w = f64::NEG_INFINITY;
    let mut points = 0;
    for &(l, r) in &art.o {
        let (li, ri) = ((l / dt).round() as usize, ((r / dt).round() as usize).min(total));
        in_o[li.min(ri)..ri].iter_mut().for_each(|c| *c = true);
        for i in li + 1..ri {
            max_w = max_w.max(art.w.at(i));
            points += 1;
        }
    }
    let mut len = 0usize;
    let mut gap = 0usize;
    for i in 0..=total {
        gap = gap.max(len.abs_diff(i - art.tau_index[i]));
        if i < total && in_o[i] {
            len += 1;
        }
    }
    Lemma4Report {
        intervals: art.o.len(),
        total_length: len as f64 * dt,
        tau_prime_end: art.tau_prime_at(total),
        stieltjes_gap: gap as f64 * dt,
        max_w_on_o: if points == 0 { 0.0 } else { max_w },
        slack: grid_slack(dt),
        points_checked: points,
    }
}

/// Clock time change of the recovered splice as a [`TimeChange`]-like
/// indicator: `true` for cells carrying an increment of `B`.
pub fn splice_cells(art: &RecoveryArtifacts) -> Vec<bool> {
    let total = art.w.grid().n();
    (0..total).map(|i| art.tau_index[i + 1] > art.tau_index[i]).collect()
}

/// The splice's own time substitution.
pub fn splice_time_change(art: &RecoveryArtifacts) -> TimeChange {
    TimeChange::from_excursion_cells(&splice_cells(art), art.dt)
}

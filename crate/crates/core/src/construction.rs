//! Reflection of the free Langevin process at its running infimum, followed
//! by the time substitution that excises the time spent there.
//!
//! # Discrete conventions
//!
//! Given `W` on a grid with step `h`, the position is the left Riemann sum
//! `Y[k+1] = Y[k] + h * W[k]` and `I` is its prefix minimum. Cell `k` (the
//! interval from `t_k` to `t_{k+1}`) is an *infimum cell* when the step ends at
//! a new minimum:
//!
//! ```text
//! Y[k+1] < I[k],   or   Y[k+1] == I[k] and W[k+1] < 0,
//! ```
//!
//! and an *excursion cell* otherwise. The decision is made at the right end of
//! the cell, which makes every maximal run of infimum cells `[a, b)` carry
//! `W < 0` strictly inside and end at the first index `b` with `W[b] >= 0`.
//! Two things follow exactly on the grid, with no tolerance:
//!
//! * `A`, the sum of `dW` over infimum cells, is nondecreasing (each run adds
//!   `W[b] - W[a] > 0`);
//! * the partial sums of the infimum increments (the dual path `B'`) reach a
//!   new maximum exactly at the end of each run, so the first-passage rule
//!   "first index with `B' >= x`" inverts them without error.
//!
//! The clock grid has one cell per excursion cell. `T[j]` is the original
//! index of the `(j+1)`-th excursion cell, and the last clock point maps to one
//! past the last excursion cell.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::{bridge_crossing_prob, NormalSource, RngStream, SamplePath, TimeGrid};

/// Prefix minimum of `y`.
pub fn running_infimum(y: &SamplePath) -> SamplePath {
    let mut inf = f64::INFINITY;
    let values = y
        .values()
        .iter()
        .map(|&v| {
            inf = inf.min(v);
            inf
        })
        .collect();
    SamplePath::new(*y.grid(), values).expect("prefix minimum of a valid path is valid")
}

/// Left Riemann integral of `w` started at 0.
pub fn integrate_left(w: &SamplePath) -> SamplePath {
    let h = w.dt();
    let mut y = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    y.push(acc);
    for &wk in &w.values()[..w.len() - 1] {
        acc += h * wk;
        y.push(acc);
    }
    SamplePath::new(*w.grid(), y).expect("integral of a finite path is finite")
}

fn check_aligned(paths: &[&SamplePath]) -> Result<()> {
    let first = paths[0].grid();
    if paths.iter().any(|p| p.grid() != first) {
        return Err(Error::InvalidGrid("paths are not aligned on one grid".into()));
    }
    Ok(())
}

/// `true` for excursion cells, `false` for infimum cells; one entry per cell.
pub fn classify_cells(w: &SamplePath, y: &SamplePath, i: &SamplePath) -> Result<Vec<bool>> {
    check_aligned(&[w, y, i])?;
    let (w, y, i) = (w.values(), y.values(), i.values());
    Ok((0..w.len() - 1)
        .map(|k| {
            let at_new_min = y[k + 1] < i[k] || (y[k + 1] == i[k] && w[k + 1] < 0.0);
            !at_new_min
        })
        .collect())
}

/// Discrete time substitution and its inverses, all in grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    dt: f64,
    /// Clock index to original index. Strictly increasing.
    t: Vec<usize>,
    /// Original index to clock index: number of excursion cells before it.
    tau: Vec<usize>,
    /// Dual clock index to original index, the mirror image of `t` for the
    /// infimum cells.
    t_prime: Vec<usize>,
}

impl TimeChange {
    /// Builds the substitution from a per-cell excursion indicator.
    pub fn from_excursion_cells(excursion: &[bool], dt: f64) -> TimeChange {
        let n = excursion.len();
        let mut t = Vec::new();
        let mut t_prime = Vec::new();
        let mut tau = Vec::with_capacity(n + 1);
        let mut count = 0;
        tau.push(0);
        for (k, &e) in excursion.iter().enumerate() {
            if e {
                t.push(k);
                count += 1;
            } else {
                t_prime.push(k);
            }
            tau.push(count);
        }
        t.push(t.last().map_or(0, |&k| k + 1));
        t_prime.push(t_prime.last().map_or(0, |&k| k + 1));
        TimeChange { dt, t, tau, t_prime }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of clock steps (excursion cells).
    pub fn clock_steps(&self) -> usize {
        self.t.len() - 1
    }

    /// Number of dual clock steps (infimum cells).
    pub fn dual_steps(&self) -> usize {
        self.t_prime.len() - 1
    }

    pub fn t_index(&self) -> &[usize] {
        &self.t
    }

    pub fn tau_index(&self) -> &[usize] {
        &self.tau
    }

    pub fn t_prime_index(&self) -> &[usize] {
        &self.t_prime
    }

    /// `T` at clock index `j`, in time units.
    pub fn t_at(&self, j: usize) -> f64 {
        self.t[j] as f64 * self.dt
    }

    pub fn tau_at(&self, i: usize) -> f64 {
        self.tau[i] as f64 * self.dt
    }

    /// `tau'(t) = t - tau(t)`.
    pub fn tau_prime_at(&self, i: usize) -> f64 {
        (i - self.tau[i]) as f64 * self.dt
    }

    /// Clock time beyond the available excursion measure is a horizon error.
    pub fn t_at_time(&self, s: f64) -> Result<f64> {
        let j = (s / self.dt).round();
        if j < 0.0 || j as usize >= self.t.len() {
            return Err(Error::Horizon(format!(
                "clock time {s} beyond the excursion measure {}",
                self.clock_steps() as f64 * self.dt
            )));
        }
        Ok(self.t_at(j as usize))
    }
}

/// Time substitution of `(W, Y, I)` under the cell classification above.
pub fn build_time_change(w: &SamplePath, y: &SamplePath, i: &SamplePath) -> Result<TimeChange> {
    Ok(TimeChange::from_excursion_cells(&classify_cells(w, y, i)?, w.dt()))
}

/// Maximal infimum runs, each entered with strictly negative velocity (or at
/// time 0, where the path starts at the infimum with `W = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfimumDecomposition {
    /// `(u, d_u)` in time units.
    pub intervals: Vec<(f64, f64)>,
    /// The same intervals as index pairs `[a, b)` of cells.
    pub cells: Vec<(usize, usize)>,
    /// Infimum cells not inside any interval: runs entered at exactly zero
    /// velocity after time 0.
    pub boundary_cells: usize,
    pub infimum_cells: usize,
}

impl InfimumDecomposition {
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(u, d)| d - u).sum()
    }
}

/// Maximal runs `[a, b)` of infimum cells. Used by the decomposition and by
/// the jump representation of `A`.
fn infimum_runs(excursion: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, &e) in excursion.iter().enumerate() {
        match (e, start) {
            (false, None) => start = Some(k),
            (true, Some(a)) => {
                runs.push((a, k));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        runs.push((a, excursion.len()));
    }
    runs
}

pub fn decompose_infimum_set(w: &SamplePath, y: &SamplePath, i: &SamplePath) -> Result<InfimumDecomposition> {
    let excursion = classify_cells(w, y, i)?;
    let infimum_cells = excursion.iter().filter(|e| !**e).count();
    let grid = w.grid();
    let mut intervals = Vec::new();
    let mut cells = Vec::new();
    let mut covered = 0;
    for (a, b) in infimum_runs(&excursion) {
        if w.at(a) < 0.0 || a == 0 {
            intervals.push((grid.time(a), grid.time(b)));
            cells.push((a, b));
            covered += b - a;
        }
    }
    Ok(InfimumDecomposition { intervals, cells, boundary_cells: infimum_cells - covered, infimum_cells })
}

/// Everything the construction produces from one Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub w: SamplePath,
    pub y: SamplePath,
    pub i: SamplePath,
    /// Reflected position on the clock grid.
    pub x: SamplePath,
    /// Velocity `W o T` (right-derivative of `X`).
    pub v: SamplePath,
    pub a: SamplePath,
    pub b: SamplePath,
    /// Infimum-cell increments on the dual clock.
    pub bp: SamplePath,
    pub tc: TimeChange,
    pub clock_grid: TimeGrid,
}

fn prefix_sums(increments: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(increments.map(|d| {
            acc += d;
            acc
        }))
        .collect()
}

/// Runs the full construction on `w`. `w` must start at 0.
pub fn reflect_construct(w: &SamplePath) -> Result<PathBundle> {
    if w.at(0) != 0.0 {
        return Err(Error::Precondition(format!("W must start at 0, got {}", w.at(0))));
    }
    let y = integrate_left(w);
    let i = running_infimum(&y);
    let excursion = classify_cells(w, &y, &i)?;
    let tc = TimeChange::from_excursion_cells(&excursion, w.dt());
    let dw: Vec<f64> = w.increments().collect();

    let b = prefix_sums(dw.iter().zip(&excursion).filter(|(_, e)| **e).map(|(d, _)| *d));
    let bp = prefix_sums(dw.iter().zip(&excursion).filter(|(_, e)| !**e).map(|(d, _)| *d));

    let (wv, yv, iv) = (w.values(), y.values(), i.values());
    let t_idx = tc.t_index();
    let x: Vec<f64> = t_idx.iter().map(|&k| yv[k] - iv[k]).collect();
    let v: Vec<f64> = t_idx.iter().map(|&k| wv[k]).collect();
    let a: Vec<f64> = t_idx.iter().enumerate().map(|(j, &k)| bp[k - j]).collect();

    let clock_grid = TimeGrid::new(0.0, w.dt(), tc.clock_steps())?;
    let dual_grid = TimeGrid::new(0.0, w.dt(), tc.dual_steps())?;
    Ok(PathBundle {
        x: SamplePath::new(clock_grid, x)?,
        v: SamplePath::new(clock_grid, v)?,
        a: SamplePath::new(clock_grid, a)?,
        b: SamplePath::new(clock_grid, b)?,
        bp: SamplePath::new(dual_grid, bp)?,
        w: w.clone(),
        y,
        i,
        tc,
        clock_grid,
    })
}

/// `A` recomputed as the sum of absorbed incoming velocities: each infimum
/// run `[a, b)` completed by clock index `j` contributes `-W[a]`.
pub fn jump_representation_a(bundle: &PathBundle) -> SamplePath {
    let t_idx = bundle.tc.t_index();
    let mut excursion = vec![true; bundle.w.len() - 1];
    for &k in bundle.tc.t_prime_index().iter().take(bundle.tc.dual_steps()) {
        excursion[k] = false;
    }
    let runs = infimum_runs(&excursion);
    let mut r = 0;
    let mut acc = 0.0;
    let values = t_idx
        .iter()
        .map(|&k| {
            while r < runs.len() && runs[r].1 <= k {
                acc -= bundle.w.at(runs[r].0);
                r += 1;
            }
            acc
        })
        .collect();
    SamplePath::new(bundle.clock_grid, values).expect("finite sums")
}

/// Tabulated first passage `sigma'(x)` of a dual path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstPassage {
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
}

/// First index `i >= from` with `values[i] >= x`.
///
/// Touching the level counts as passing it: a Brownian path that reaches a
/// level exceeds it immediately afterwards, and on the grid this is the rule
/// under which the dual path is inverted exactly at the end of every run.
pub fn first_passage_index_from(values: &[f64], x: f64, from: usize) -> Option<usize> {
    values[from.min(values.len())..].iter().position(|&v| v >= x).map(|p| p + from)
}

/// `sigma'(x)` in time units; a horizon error if the path never reaches `x`.
pub fn first_passage(bp: &SamplePath, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Precondition(format!("first-passage level must be >= 0, got {x}")));
    }
    first_passage_index_from(bp.values(), x, 0)
        .map(|i| bp.time(i))
        .ok_or_else(|| Error::Horizon(format!("insufficient B' horizon: level {x} not reached by t = {}", bp.grid().horizon())))
}

/// `sigma'` evaluated at every level of a nondecreasing sequence, searching
/// forward so the total cost is linear.
pub fn first_passage_table(bp: &SamplePath, levels: &[f64]) -> Result<FirstPassage> {
    let mut times = Vec::with_capacity(levels.len());
    let mut from = 0;
    let mut prev = f64::NEG_INFINITY;
    for &x in levels {
        let start = if x >= prev { from } else { 0 };
        prev = x;
        let idx = first_passage_index_from(bp.values(), x, start)
            .ok_or_else(|| Error::Horizon(format!("insufficient B' horizon for level {x}")))?;
        from = idx;
        times.push(bp.time(idx));
    }
    Ok(FirstPassage { levels: levels.to_vec(), times })
}

/// `max_j |T_j - t_j - sigma'(A_j)|` over the clock grid, with `sigma'` taken
/// from the bundle's own dual path.
pub fn verify_lemma1(bundle: &PathBundle) -> Result<f64> {
    // Residual in whole cells, so exact agreement reads as exactly 0.
    let bp = bundle.bp.values();
    let t_idx = bundle.tc.t_index();
    let mut from = 0;
    let mut worst = 0usize;
    for (j, &a) in bundle.a.values().iter().enumerate() {
        let sigma = first_passage_index_from(bp, a, from)
            .ok_or_else(|| Error::Horizon(format!("insufficient B' horizon for level {a}")))?;
        from = sigma;
        worst = worst.max(t_idx[j].abs_diff(j + sigma));
    }
    Ok(worst as f64 * bundle.clock_grid.dt())
}

/// `W` reassembled as `B o tau + B' o tau'` at every original grid point.
pub fn reassemble_w(bundle: &PathBundle) -> Vec<f64> {
    let tau = bundle.tc.tau_index();
    (0..bundle.w.len()).map(|i| bundle.b.at(tau[i]) + bundle.bp.at(i - tau[i])).collect()
}

/// Max deviation between `W` and its reassembly.
pub fn verify_prop2(bundle: &PathBundle) -> f64 {
    reassemble_w(bundle).iter().zip(bundle.w.values()).map(|(r, w)| (r - w).abs()).fold(0.0, f64::max)
}

/// `max_j |V_j - (B_j + A_j)|`.
pub fn velocity_identity_residual(bundle: &PathBundle) -> f64 {
    (0..bundle.clock_grid.len())
        .map(|j| (bundle.v.at(j) - (bundle.b.at(j) + bundle.a.at(j))).abs())
        .fold(0.0, f64::max)
}

/// Output of [`sample_construction_clock`]: the construction observed on its
/// clock grid only.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockSample {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Original-time steps consumed.
    pub original_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockSamplerOptions {
    /// Jump over long infimum runs by Brownian-bridge bisection instead of
    /// stepping through them.
    pub skip_runs: bool,
    /// Hard cap on original-time steps.
    pub max_original_steps: u64,
    /// A block is declared free of grid crossings when the bridge crossing
    /// probability is below this.
    pub crossing_tol: f64,
}

impl Default for ClockSamplerOptions {
    fn default() -> Self {
        ClockSamplerOptions { skip_runs: true, max_original_steps: 1 << 52, crossing_tol: 1e-12 }
    }
}

/// First grid index in `1..=n` at which a Brownian path from `w_left` (at 0)
/// to `w_right` (at `n`) is `>= 0`, filling interior points by bridge
/// bisection. Blocks whose continuous crossing probability is negligible are
/// not resolved.
fn first_nonneg_in_block(w_left: f64, w_right: f64, n: u64, h: f64, tol: f64, normals: &mut NormalSource) -> Option<(u64, f64)> {
    if n == 1 {
        return (w_right >= 0.0).then_some((1, w_right));
    }
    if w_right < 0.0 && bridge_crossing_prob(-w_left, -w_right, n as f64 * h, 0.0) < tol {
        return None;
    }
    let m = n / 2;
    let (nf, mf) = (n as f64, m as f64);
    let mean = w_left + (w_right - w_left) * mf / nf;
    let sd = (h * mf * (nf - mf) / nf).sqrt();
    let w_mid = mean + sd * normals.next_normal();
    if let Some(hit) = first_nonneg_in_block(w_left, w_mid, m, h, tol, normals) {
        return Some(hit);
    }
    first_nonneg_in_block(w_mid, w_right, n - m, h, tol, normals).map(|(k, w)| (k + m, w))
}

/// Samples the construction directly on its clock grid, `clock_steps` steps
/// of size `dt`.
///
/// The state `(W, Y - I)` is advanced cell by cell with the same
/// classification as [`reflect_construct`]. With `skip_runs` off the normals
/// are consumed exactly as by [`crate::paths::sample_brownian`] on the same
/// stream, so the output is the prefix of the full construction. With it on,
/// the time spent at the infimum, which is heavy-tailed, costs only a
/// logarithmic number of draws per run.
pub fn sample_construction_clock(clock_steps: usize, dt: f64, stream: RngStream, opts: ClockSamplerOptions) -> Result<ClockSample> {
    let grid = TimeGrid::new(0.0, dt, clock_steps)?;
    let mut normals = stream.normals();
    let sd = dt.sqrt();
    let n_points = clock_steps + 1;
    let mut out = ClockSample {
        grid,
        x: Vec::with_capacity(n_points),
        v: Vec::with_capacity(n_points),
        a: Vec::with_capacity(n_points),
        b: Vec::with_capacity(n_points),
        original_steps: 0,
    };
    let (mut r, mut w, mut a, mut b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut w_next = w + sd * normals.next_normal();
    while out.x.len() < n_points {
        if out.original_steps >= opts.max_original_steps {
            return Err(Error::Horizon(format!("construction exceeded {} original steps", opts.max_original_steps)));
        }
        if opts.skip_runs && r == 0.0 && w < 0.0 {
            // Inside an infimum run: every cell is an infimum cell until W
            // turns nonnegative. The pending draw is the first step.
            let (steps, w_end) = skip_run(w_next, dt, &opts, &mut normals, out.original_steps)?;
            a += w_end - w;
            w = w_end;
            out.original_steps += steps;
            w_next = w + sd * normals.next_normal();
            continue;
        }
        let dw = w_next - w;
        let r_test = r + dt * w;
        if r_test < 0.0 || (r_test == 0.0 && w_next < 0.0) {
            a += dw;
            r = 0.0;
        } else {
            out.x.push(r);
            out.v.push(w);
            out.a.push(a);
            out.b.push(b);
            b += dw;
            r = r_test;
        }
        w = w_next;
        out.original_steps += 1;
        w_next = w + sd * normals.next_normal();
    }
    Ok(out)
}

/// Resolves an infimum run whose first step ends at `w1`. Returns the number of steps to the first nonnegative grid value and
/// that value.
fn skip_run(w1: f64, h: f64, opts: &ClockSamplerOptions, normals: &mut NormalSource, used: u64) -> Result<(u64, f64)> {
    if w1 >= 0.0 {
        return Ok((1, w1));
    }
    let mut steps = 1u64;
    let mut w = w1;
    let mut block = 1u64;
    loop {
        if used + steps >= opts.max_original_steps {
            return Err(Error::Horizon(format!("infimum run exceeded {} original steps", opts.max_original_steps)));
        }
        let w_end = w + (block as f64 * h).sqrt() * normals.next_normal();
        match first_nonneg_in_block(w, w_end, block, h, opts.crossing_tol, normals) {
            Some((k, wk)) => return Ok((steps + k, wk)),
            None => {
                steps += block;
                w = w_end;
                block = block.saturating_mul(2);
            }
        }
    }
}

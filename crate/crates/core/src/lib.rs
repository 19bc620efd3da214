//! Simulation and verification toolkit for the Langevin process reflected at a
//! completely inelastic boundary.
//!
//! A particle on the half-line `x >= 0` is driven by white noise; when it hits
//! the wall its velocity is absorbed. Two independent routes produce the
//! process:
//!
//! * [`construction`]: reflect the integrated Brownian motion at its running
//!   infimum and excise the time spent there;
//! * [`integrator`]: step the second-order equation directly with a
//!   projection onto the constraint.
//!
//! [`recovery`] goes the other way: from any solution plus an independent
//! Brownian motion it rebuilds a driving Brownian motion, which is the
//! executable content of weak uniqueness. [`counterexample`] builds a smooth
//! force with two distinct solutions. [`stats`] holds the statistical battery
//! and [`runner`] ties everything into reproducible Monte Carlo experiments.

// `!(x > 0.0)` is how inputs are validated here: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops walk several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod construction;
pub mod counterexample;
pub mod error;
pub mod integrator;
pub mod io;
pub mod paths;
pub mod recovery;
pub mod runner;
pub mod stats;

pub use error::{Error, Result};
pub use paths::{RngStream, SamplePath, TimeGrid};

/// Grid tolerance for sign and location audits: the Brownian modulus of
/// continuity `c * sqrt(dt * ln(1/dt))`, with `c` calibrated so the largest
/// of `1/dt` Gaussian increments stays inside it with probability about
/// `1 - dt`.
pub fn grid_slack(dt: f64) -> f64 {
    const C: f64 = 2.0;
    C * (dt * (1.0 / dt).ln().max(1.0)).sqrt()
}

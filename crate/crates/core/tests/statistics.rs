//! Calibration of the statistical tests on exact null models.

use inelastic_core::config::RunConfig;
use inelastic_core::paths::{sample_brownian, Channel, RngStream, TimeGrid};
use inelastic_core::runner::{calibration, par_map};
use inelastic_core::stats::{brownian_battery, ks_one_sample, ks_two_sample, normal_cdf, ALPHA};

fn normals(stream: RngStream, n: usize) -> Vec<f64> {
    let mut src = stream.normals();
    (0..n).map(|_| src.next_normal()).collect()
}

#[test]
fn one_sample_ks_accepts_normal_draws() {
    let accepted = par_map(100, |r| {
        let x = normals(RngStream::for_path(101, r as u64, Channel::W), 10_000);
        ks_one_sample(&x, |v| normal_cdf(v, 0.0, 1.0), ALPHA).unwrap().pass
    });
    assert!(accepted.iter().filter(|&&a| a).count() >= 98);
}

#[test]
fn two_sample_ks_accepts_independent_normals() {
    let accepted = par_map(100, |r| {
        let a = normals(RngStream::for_path(102, r as u64, Channel::W), 10_000);
        let b = normals(RngStream::for_path(102, r as u64, Channel::BPrime), 10_000);
        ks_two_sample(&a, &b, ALPHA).unwrap().pass
    });
    assert!(accepted.iter().filter(|&&a| a).count() >= 98);
}

#[test]
fn battery_accepts_brownian_paths() {
    let grid = TimeGrid::new(0.0, 1e-5, 100_000).unwrap();
    let passed = par_map(100, |r| brownian_battery(&sample_brownian(grid, RngStream::for_path(103, r as u64, Channel::W))).unwrap().report.pass);
    assert!(passed.iter().filter(|&&p| p).count() >= 97);
}

/// With enough repetitions the rejection rate is pinned near its nominal
/// value; over only 100 it is a count of one or two events.
#[test]
fn rejection_rates_are_nominal_over_many_repetitions() {
    let cfg = RunConfig { paths: 3000, samples: 10_000, seed: 104, ..RunConfig::default() };
    let r = calibration(&cfg).unwrap().result;
    for k in [r.ks_one_sample_rejections, r.ks_two_sample_rejections] {
        let rate = k as f64 / 3000.0;
        assert!((0.5 * ALPHA..=2.0 * ALPHA).contains(&rate), "{k}/3000");
    }
}

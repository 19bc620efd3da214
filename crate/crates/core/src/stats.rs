//! Statistical checks. The Kolmogorov-Smirnov tests and the composite
//! Brownian-motion test report asymptotic p-values; the time spent at the wall
//! is a plain count of grid points.
//!
//! All p-values are asymptotic. The Kolmogorov survival function
//! `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)` is summed to 100 terms for
//! `l >= 1`; below that the equivalent theta-function form
//! `1 - sqrt(2 pi)/l sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 l^2))` converges much
//! faster and is used instead.

use serde::Serialize;
use libm::erfc;

use crate::error::{Error, Result};
use crate::paths::SamplePath;

/// Minimum sample size for the KS tests.
pub const KS_MIN_N: usize = 8;
/// Minimum number of increments for [`brownian_battery`].
pub const BATTERY_MIN_N: usize = 100;
/// Default significance level.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub n: usize,
}

/// Kolmogorov distribution survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=100).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Precondition("NaN in sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// One-sample KS test of `samples` against the distribution function `cdf`;
/// passes when the p-value exceeds `alpha`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<TestReport> {
    let n = samples.len();
    if n < KS_MIN_N {
        return Err(Error::SampleSize { got: n, min: KS_MIN_N });
    }
    let s = sorted(samples)?;
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_sf(nf.sqrt() * d);
    Ok(TestReport { name: "ks_one_sample".into(), statistic: d, p_value: Some(p), threshold: alpha, pass: p > alpha, n })
}

/// Two-sample KS test with effective size `n m / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport> {
    for s in [a, b] {
        if s.len() < KS_MIN_N {
            return Err(Error::SampleSize { got: s.len(), min: KS_MIN_N });
        }
    }
    let (sa, sb) = (sorted(a)?, sorted(b)?);
    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let p = kolmogorov_sf((n * m / (n + m)).sqrt() * d);
    Ok(TestReport {
        name: "ks_two_sample".into(),
        statistic: d,
        p_value: Some(p),
        threshold: alpha,
        pass: p > alpha,
        n: sa.len() + sb.len(),
    })
}

/// Composite Brownian-motion test and its three components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub report: TestReport,
    pub components: Vec<TestReport>,
}

/// Increment normality (KS against `N(0, dt)` at [`ALPHA`]), quadratic
/// variation within 5% of the horizon, and lag-1 increment autocorrelation
/// within `3/sqrt(n)`. Passes iff all three pass.
pub fn brownian_battery(path: &SamplePath) -> Result<BatteryReport> {
    let n = path.grid().n();
    if n < BATTERY_MIN_N {
        return Err(Error::SampleSize { got: n, min: BATTERY_MIN_N });
    }
    let dt = path.dt();
    let inc: Vec<f64> = path.increments().collect();
    let sd = dt.sqrt();
    let ks = ks_one_sample(&inc, |x| normal_cdf(x, 0.0, sd), ALPHA)?;

    let horizon = n as f64 * dt;
    let qv: f64 = inc.iter().map(|d| d * d).sum();
    let qv_rel = (qv - horizon).abs() / horizon;
    let qv_report = TestReport {
        name: "quadratic_variation".into(),
        statistic: qv,
        p_value: None,
        threshold: 0.05,
        pass: qv_rel <= 0.05,
        n,
    };

    let mean = inc.iter().sum::<f64>() / n as f64;
    let var: f64 = inc.iter().map(|d| (d - mean) * (d - mean)).sum();
    let cov: f64 = inc.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let rho = if var > 0.0 { cov / var } else { 1.0 };
    let bound = 3.0 / (n as f64).sqrt();
    let ac_report = TestReport {
        name: "lag1_autocorrelation".into(),
        statistic: rho,
        p_value: None,
        threshold: bound,
        pass: rho.abs() <= bound,
        n,
    };

    let ks_report = TestReport { name: "increment_normality".into(), ..ks };
    let pass = ks_report.pass && qv_report.pass && ac_report.pass;
    let failed = [&ks_report, &qv_report, &ac_report].iter().filter(|r| !r.pass).count();
    Ok(BatteryReport {
        report: TestReport {
            name: "brownian_battery".into(),
            statistic: failed as f64,
            p_value: None,
            threshold: 0.0,
            pass,
            n,
        },
        components: vec![ks_report, qv_report, ac_report],
    })
}

/// Grid time spent at or below `level`: `dt` times the number of grid points
/// with `X <= level`.
pub fn zero_set_measure(x: &SamplePath, level: f64) -> f64 {
    x.dt() * x.values().iter().filter(|&&v| v <= level).count() as f64
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    let s = sorted(samples).expect("median of NaN-free sample");
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

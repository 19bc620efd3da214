//! Run configuration. Command-line values override a TOML file, which
//! overrides the defaults.
//!
//! | key          | default      | meaning                                              |
//! |--------------|--------------|------------------------------------------------------|
//! | `dt`         | `1e-3`       | grid step                                            |
//! | `t_max`      | `1`          | horizon (original time for the integrator, clock time for the construction) |
//! | `paths`      | `100`        | number of independent paths                          |
//! | `samples`    | `10000`      | sample size of two-sample law comparisons            |
//! | `seed`       | `0`          | master seed                                          |
//! | `method`     | `construction` | `construction` or `sde`                            |
//! | `epsilon`    | `0.1`        | jump threshold of the epsilon splice                 |
//! | `k`          | `1`          | regularity index of the counterexample               |
//! | `refine`     | `false`      | sub-step impact location in the integrator           |
//! | `bprime_cap` | `67108864`   | largest number of `B'` steps sampled before a horizon error |
//! | `tol`        | per gate     | overrides the tolerance of the main gate             |
//! | `output`     | see below    | output directory                                     |
//!
//! Without `output` the directory comes from `INELASTIC_OUT_DIR`, then `out`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INELASTIC_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Construction,
    Sde,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "construction" => Ok(Method::Construction),
            "sde" => Ok(Method::Sde),
            other => Err(Error::Config { key: "method".into(), reason: format!("expected `construction` or `sde`, got `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_max: f64,
    pub paths: usize,
    pub samples: usize,
    pub seed: u64,
    pub method: Method,
    pub epsilon: f64,
    pub k: u32,
    pub refine: bool,
    pub bprime_cap: usize,
    pub tol: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dt: 1e-3,
            t_max: 1.0,
            paths: 100,
            samples: 10_000,
            seed: 0,
            method: Method::Construction,
            epsilon: 0.1,
            k: 1,
            refine: false,
            bprime_cap: 1 << 26,
            tol: None,
            output: None,
        }
    }
}

/// Command-line values; `Some` wins over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub paths: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub epsilon: Option<f64>,
    pub k: Option<u32>,
    pub refine: Option<bool>,
    pub bprime_cap: Option<usize>,
    pub tol: Option<f64>,
    pub output: Option<PathBuf>,
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

fn typed<T: serde::de::DeserializeOwned>(key: &str, value: toml::Value) -> Result<T> {
    let shown = value.to_string();
    value.try_into().map_err(|e: toml::de::Error| bad(key, format!("type mismatch for value {shown}: {}", e.message())))
}

impl RunConfig {
    /// Parses TOML text. Unknown keys and ill-typed values are rejected with
    /// the offending key.
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad("<file>", e.message().to_string()))?;
        let mut cfg = RunConfig::default();
        for (key, value) in table {
            match key.as_str() {
                "dt" => cfg.dt = typed(&key, value)?,
                "t_max" => cfg.t_max = typed(&key, value)?,
                "paths" => cfg.paths = typed(&key, value)?,
                "samples" => cfg.samples = typed(&key, value)?,
                "seed" => cfg.seed = typed(&key, value)?,
                "method" => cfg.method = typed::<String>(&key, value)?.parse()?,
                "epsilon" => cfg.epsilon = typed(&key, value)?,
                "k" => cfg.k = typed(&key, value)?,
                "refine" => cfg.refine = typed(&key, value)?,
                "bprime_cap" => cfg.bprime_cap = typed(&key, value)?,
                "tol" => cfg.tol = Some(typed(&key, value)?),
                "output" => cfg.output = Some(typed::<String>(&key, value)?.into()),
                _ => return Err(bad(&key, "unknown key")),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => {$( if let Some(v) = o.$f.clone() { self.$f = v; } )*};
        }
        take!(dt, t_max, paths, samples, seed, method, epsilon, k, refine, bprime_cap);
        if o.tol.is_some() {
            self.tol = o.tol;
        }
        if o.output.is_some() {
            self.output = o.output.clone();
        }
        self
    }

    pub fn validate(self) -> Result<RunConfig> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(bad("t_max", format!("must be > 0, got {}", self.t_max)));
        }
        if self.dt > self.t_max {
            return Err(bad("dt", format!("{} exceeds t_max = {}", self.dt, self.t_max)));
        }
        if self.paths < 1 {
            return Err(bad("paths", "must be >= 1"));
        }
        if self.samples < crate::stats::KS_MIN_N {
            return Err(bad("samples", format!("must be >= {}", crate::stats::KS_MIN_N)));
        }
        if !(self.epsilon > 0.0) {
            return Err(bad("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.k > crate::counterexample::K_MAX {
            return Err(bad("k", format!("must be <= {}", crate::counterexample::K_MAX)));
        }
        if self.bprime_cap < 1 {
            return Err(bad("bprime_cap", "must be >= 1"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(bad("tol", format!("must be > 0, got {t}")));
            }
        }
        Ok(self)
    }

    /// Loads the file if given and applies the overrides before validating.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let base = match file {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        base.apply(overrides).validate()
    }

    /// Number of grid steps covering `t_max`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

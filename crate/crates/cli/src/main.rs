//! `inelastic`: the experiments of the core crate from the command line.
//!
//! Exit codes: 0 when every gate passes, 1 for usage and configuration
//! errors, 2 when a numerical gate fails, 3 when a horizon or resource limit
//! is hit.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inelastic_core::config::{Method, Overrides, RunConfig};
use inelastic_core::counterexample::{build_phi, curves};
use inelastic_core::io::{write_clock_csv, write_curves_csv, write_events_csv, write_json, write_trace_csv};
use inelastic_core::runner::{self, par_map, Report};
use inelastic_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "inelastic", version, about = "Langevin process with a completely inelastic wall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<f64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Sample size of two-sample comparisons.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    k: Option<u32>,
    /// Locate impacts inside a step.
    #[arg(long, global = true)]
    refine: bool,
    #[arg(long = "bprime-cap", global = true)]
    bprime_cap: Option<usize>,
    /// Tolerance of the main gate.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory (default: $INELASTIC_OUT_DIR, then ./out).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Construction,
    Sde,
}

#[derive(Subcommand)]
enum Command {
    /// Write path CSVs (t, X, V, A, B); the integrator also writes impact events.
    Simulate(Common),
    /// Check one identity over many paths and write a JSON report.
    Verify {
        #[arg(value_enum)]
        which: Identity,
        #[command(flatten)]
        common: Common,
    },
    /// Recovered-noise battery and two-sample comparison of the two methods.
    Crosscheck(Common),
    /// Refinement, scaling, splice and calibration studies.
    Experiment {
        #[arg(value_enum)]
        which: Study,
        #[command(flatten)]
        common: Common,
    },
    /// Smooth force with two solutions.
    Counterexample {
        #[arg(value_enum)]
        action: CxAction,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Identity {
    Lemma1,
    Prop2,
    Prop3,
    Bm,
    Lemma4,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    ZeroSet,
    Scaling,
    Epsilon,
    Calibration,
    Constraints,
}

#[derive(Clone, Copy, ValueEnum)]
enum CxAction {
    Build,
    Verify,
    Export,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let o = Overrides {
            dt: self.dt,
            t_max: self.t_max,
            paths: self.paths,
            samples: self.samples,
            seed: self.seed,
            method: self.method.map(|m| match m {
                MethodArg::Construction => Method::Construction,
                MethodArg::Sde => Method::Sde,
            }),
            epsilon: self.epsilon,
            k: self.k,
            refine: self.refine.then_some(true),
            bprime_cap: self.bprime_cap,
            tol: self.tol,
            output: self.output.clone(),
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

/// What a run produced: whether every gate passed and the files written.
struct Outcome {
    pass: bool,
    summary: String,
    files: Vec<PathBuf>,
}

fn report<T: Serialize>(r: &Report<T>, dir: &Path, name: &str) -> Result<Outcome, Error> {
    let path = dir.join(format!("{name}.json"));
    write_json(&path, r)?;
    let summary = r
        .gates
        .iter()
        .map(|g| format!("  {} {} = {} {} {}", if g.pass { "ok  " } else { "FAIL" }, g.name, g.value, g.rule, g.threshold))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome { pass: r.pass, summary, files: vec![path] })
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, Error> {
    std::fs::create_dir_all(dir)?;
    let files = par_map(cfg.paths, |p| -> Result<Vec<PathBuf>, Error> {
        match cfg.method {
            Method::Construction => {
                let s = runner::construction_clock(cfg, p, cfg.t_max, cfg.dt)?;
                let path = dir.join(format!("construction_{p:04}.csv"));
                write_clock_csv(&path, &s)?;
                Ok(vec![path])
            }
            Method::Sde => {
                let tr = runner::sde_trace(cfg, p, cfg.dt)?;
                let (tp, ep) = (dir.join(format!("sde_{p:04}.csv")), dir.join(format!("sde_{p:04}_events.csv")));
                write_trace_csv(&tp, &tr)?;
                write_events_csv(&ep, &tr.events)?;
                Ok(vec![tp, ep])
            }
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?
    .concat();
    Ok(Outcome { pass: true, summary: format!("  {} files", files.len()), files })
}

fn run(cmd: &Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            simulate(&cfg, &cfg.output_dir())
        }
        Command::Verify { which, common } => {
            let cfg = common.load()?;
            let dir = cfg.output_dir();
            match which {
                Identity::Lemma1 => report(&runner::lemma1(&cfg)?, &dir, "verify_lemma1"),
                Identity::Prop2 => report(&runner::prop2(&cfg)?, &dir, "verify_prop2"),
                Identity::Prop3 => report(&runner::prop3(&cfg)?, &dir, "verify_prop3"),
                Identity::Bm => report(&runner::bm(&cfg)?, &dir, "verify_bm"),
                Identity::Lemma4 => report(&runner::lemma4(&cfg)?, &dir, "verify_lemma4"),
            }
        }
        Command::Crosscheck(c) => {
            let cfg = c.load()?;
            report(&runner::crosscheck(&cfg)?, &cfg.output_dir(), "crosscheck")
        }
        Command::Experiment { which, common } => {
            let cfg = common.load()?;
            let dir = cfg.output_dir();
            match which {
                Study::ZeroSet => report(&runner::zero_set(&cfg)?, &dir, "zero_set"),
                Study::Scaling => report(&runner::scaling(&cfg)?, &dir, "scaling"),
                Study::Epsilon => report(&runner::epsilon(&cfg)?, &dir, "epsilon"),
                Study::Calibration => report(&runner::calibration(&cfg)?, &dir, "calibration"),
                Study::Constraints => report(&runner::constraints(&cfg)?, &dir, "constraints"),
            }
        }
        Command::Counterexample { action, common } => {
            let cfg = common.load()?;
            let dir = cfg.output_dir();
            match action {
                CxAction::Build => report(&runner::cx_build(&cfg)?, &dir, "counterexample_build"),
                CxAction::Verify => report(&runner::cx_verify(&cfg)?, &dir, "counterexample_verify"),
                CxAction::Export => {
                    let mut out = report(&runner::cx_verify(&cfg)?, &dir, "counterexample_verify")?;
                    let spec = runner::counterexample_spec(&cfg)?;
                    let phi = build_phi(&spec)?;
                    let (lo, hi) = spec.range();
                    let path = dir.join("counterexample.csv");
                    write_curves_csv(&path, &curves(&phi, lo, hi, 20_001)?)?;
                    out.files.push(path);
                    Ok(out)
                }
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Horizon(_) | Error::Io(_) => 3,
        Error::Construction(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(out) => {
            // A closed pipe on stdout is not an error of the run.
            let mut w = std::io::stdout().lock();
            let _ = writeln!(w, "{}", if out.pass { "PASS" } else { "FAIL" });
            if !out.summary.is_empty() {
                let _ = writeln!(w, "{}", out.summary);
            }
            for f in &out.files {
                let _ = writeln!(w, "  wrote {}", f.display());
            }
            ExitCode::from(if out.pass { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Command-line driver: configuration, deterministic manifests and CSV output
//! for the stochop experiments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod compare;
pub mod output;
pub mod settings;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::compare::{compare_curves, CompareReport, Curve};
use crate::output::{read_numeric_csv, Manifest, OutputDir, REDUCTION_ORDER};
use crate::settings::Settings;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "STOCHOP_OUT";

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Runtime(String),
    #[error("comparison failed")]
    Comparison(Box<CompareReport>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) | Failure::Runtime(_) => 2,
            Failure::Comparison(_) => 3,
        }
    }
}

impl From<stochop::Error> for Failure {
    fn from(e: stochop::Error) -> Self {
        use stochop::Error as E;
        match e {
            E::InvalidArgument(_) | E::InvalidField(_) | E::Parse { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stochop", version, about = "Optimal prediction and stochastic reduced models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (default: $STOCHOP_OUT, else ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensemble parallelism; never affects results.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// desk (m=2, sampled_bound=4) or paper (m=5, sampled_bound=10).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hald oscillator pair: ensemble mean, OP and Galerkin trajectories.
    Hald(Common),
    /// Langevin fluctuation-dissipation check.
    Langevin(Common),
    /// Monte Carlo ensemble of the truncated Euler-alpha system.
    EulerMc(Common),
    /// Correlation functions and Gaussian width fits of the sampled modes.
    EulerCorrelations {
        #[command(flatten)]
        common: Common,
        /// Run with no resolved modes (every mode sampled).
        #[arg(long)]
        equilibrium: bool,
    },
    /// Stochastic reduced-model ensemble.
    EulerSop {
        #[command(flatten)]
        common: Common,
        /// Width constant: sigma(k) = c / |k|.
        #[arg(long)]
        c: Option<f64>,
        /// widths.csv from euler-correlations; c is refitted from it.
        #[arg(long)]
        widths: Option<PathBuf>,
    },
    /// Compare two A-enstrophy curves.
    Compare {
        reference: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        /// End the window where the reference has decayed by this fraction.
        #[arg(long)]
        decay: Option<f64>,
        /// Start of the monotonicity check.
        #[arg(long, default_value_t = 0.5)]
        monotone_after: f64,
    },
}

/// Result of a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub checksums: BTreeMap<String, String>,
    pub report: String,
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

type Driver = fn(&mut Settings, &mut OutputDir) -> Result<commands::CommandOutput, Failure>;

fn run_experiment(
    name: &str,
    common: &Common,
    extra: &[(&str, Option<String>)],
    driver: Driver,
) -> Result<Outcome, Failure> {
    let mut flags: Vec<(&str, Option<String>)> = vec![
        ("seed", common.seed.map(|v| v.to_string())),
        ("ensemble", common.ensemble.map(|v| v.to_string())),
        ("preset", common.preset.clone()),
    ];
    flags.extend_from_slice(extra);
    let mut settings = Settings::from_sources(common.config.as_deref(), &common.set, &flags)?;
    let workers = match common.workers {
        Some(0) => return Err(Failure::Usage("workers must be at least 1".into())),
        Some(n) => n,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let root = out_dir(common);
    let mut out = OutputDir::create(&root)?;
    let start = Instant::now();
    let result = pool.install(|| driver(&mut settings, &mut out))?;
    settings.check_unused()?;
    let elapsed = start.elapsed().as_secs_f64();
    out.write("config.txt", &settings.to_flat())?;
    let checksums = out.checksums().clone();
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config: settings.echo(),
        master_seed: result.seed,
        workers,
        reduction_order: REDUCTION_ORDER,
        wall_clock_seconds: elapsed,
        outputs: &checksums,
        results: &result.results,
    };
    let path = root.join("manifest.json");
    std::fs::write(&path, manifest.to_json())
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(Outcome {
        out_dir: Some(root),
        checksums,
        report: result.summary,
    })
}

fn read_curve(path: &Path) -> Result<Curve, Failure> {
    let (header, rows) = read_numeric_csv(path)?;
    Curve::from_rows(&header, &rows)
}

pub fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Hald(c) => run_experiment("hald", &c, &[], commands::hald),
        Command::Langevin(c) => run_experiment("langevin", &c, &[], commands::langevin),
        Command::EulerMc(c) => run_experiment("euler-mc", &c, &[], commands::euler_mc),
        Command::EulerCorrelations { common, equilibrium } => run_experiment(
            "euler-correlations",
            &common,
            &[("equilibrium", equilibrium.then(|| "true".to_string()))],
            commands::euler_correlations,
        ),
        Command::EulerSop { common, c, widths } => run_experiment(
            "euler-sop",
            &common,
            &[
                ("c", c.map(|v| v.to_string())),
                ("widths", widths.map(|p| p.display().to_string())),
            ],
            commands::euler_sop,
        ),
        Command::Compare {
            reference,
            candidate,
            tolerance,
            decay,
            monotone_after,
        } => {
            let report = compare_curves(
                &read_curve(&reference)?,
                &read_curve(&candidate)?,
                tolerance,
                decay,
                monotone_after,
            )?;
            if report.passed() {
                Ok(Outcome {
                    out_dir: None,
                    checksums: BTreeMap::new(),
                    report: report.render(),
                })
            } else {
                Err(Failure::Comparison(Box::new(report)))
            }
        }
    }
}

/// Parse arguments, run, print the report, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if let Some(dir) = outcome.out_dir {
                println!("outputs written to {}", dir.display());
            }
            0
        }
        Err(Failure::Comparison(report)) => {
            print!("{}", report.render());
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

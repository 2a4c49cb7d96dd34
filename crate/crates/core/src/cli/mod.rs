//! Command-line front end: `simulate`, `scan`, `calibrate` and `report`.

mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{calibrate, report, scan, simulate, Outcome};
pub use config::{CalibrateConfig, MethodChoice, RunConfig, ScanConfig};
pub use manifest::{RunManifest, Stage, StageStatus, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::lmm::{Exclusion, UnivariateTest};

pub const LMM_TABLE: &str = "assoc_lmm.csv";
pub const UNIVARIATE_TABLE: &str = "assoc_univariate.csv";
pub const FIT_FILE: &str = "lmm_fit.toml";
pub const CALIBRATION_TABLE: &str = "calibration.csv";
pub const CALIBRATION_SUMMARY: &str = "calibration_summary.toml";

#[derive(Debug, Parser)]
#[command(name = "klmm", version, about = "Mixed-model association scans on simulated family cohorts")]
pub struct Cli {
    /// Simulation seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one cohort, or a parameter grid of cohorts.
    Simulate(SimulateArgs),
    /// Run association tests on a dataset directory.
    Scan(ScanArgs),
    /// Pool non-causal P values from scanned datasets and check calibration.
    Calibrate(CalibrateArgs),
    /// Pretty-print a calibration summary or table.
    Report(ReportArgs),
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    /// Generate the full parameter grid.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub n_individuals: Option<usize>,
    #[arg(long)]
    pub n_snps: Option<usize>,
    #[arg(long)]
    pub family_fraction: Option<f64>,
    #[arg(long)]
    pub offspring_per_pair: Option<usize>,
    #[arg(long)]
    pub n_causal: Option<usize>,
    #[arg(long)]
    pub heritability: Option<f64>,
    /// Add the hidden confounding SNP block.
    #[arg(long)]
    pub hidden: bool,
    #[arg(long)]
    pub n_hidden: Option<usize>,
    #[arg(long)]
    pub hidden_strength: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub method: Option<MethodChoice>,
    #[arg(long)]
    pub exclusion: Option<Exclusion>,
    #[arg(long)]
    pub refit_per_snp: bool,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Fix the variance ratio instead of fitting it.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub univariate_test: Option<UnivariateTest>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long)]
    pub alpha_points: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub file: PathBuf,
}

impl SimulateArgs {
    pub fn apply(&self, cfg: &mut RunConfig, seed: Option<u64>) {
        let s = &mut cfg.simulate;
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = self.$field { s.$field = v; } )*};
        }
        set!(n_individuals, n_snps, family_fraction, offspring_per_pair, n_causal, heritability, n_hidden, hidden_strength);
        if self.hidden {
            s.hidden_enabled = true;
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
    }
}

impl ScanArgs {
    pub fn apply(&self, cfg: &mut ScanConfig) {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(e) = self.exclusion {
            cfg.exclusion = e;
        }
        if self.refit_per_snp {
            cfg.refit_per_snp = true;
        }
        if let Some(n) = self.grid_points {
            cfg.grid_points = n;
        }
        if self.delta.is_some() {
            cfg.delta = self.delta;
        }
        if let Some(t) = self.univariate_test {
            cfg.univariate_test = t;
        }
    }
}

impl CalibrateArgs {
    pub fn apply(&self, cfg: &mut CalibrateConfig) {
        if let Some(n) = self.alpha_points {
            cfg.alpha_points = n;
        }
        if let Some(l) = self.level {
            cfg.level = l;
        }
    }
}

/// Runs a parsed command line; the returned code is the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let work = move || -> Result<i32> {
        let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
        let out = cli.out.clone();
        let outcome = match &cli.command {
            Command::Simulate(args) => {
                args.apply(&mut cfg, cli.seed);
                simulate(&cfg, args.grid, &out.unwrap_or_else(|| PathBuf::from("klmm-out")))?
            }
            Command::Scan(args) => {
                args.apply(&mut cfg.scan);
                let out = out.unwrap_or_else(|| args.dataset.clone());
                scan(&cfg.scan, &args.dataset, &out)?
            }
            Command::Calibrate(args) => {
                args.apply(&mut cfg.calibrate);
                let out = out.unwrap_or_else(|| PathBuf::from("calibration"));
                calibrate(&cfg.calibrate, &args.results, &out)?
            }
            Command::Report(args) => report(&args.file)?,
        };
        print!("{}", outcome.message);
        Ok(outcome.exit_code)
    };
    match cli.threads {
        None => work(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
    }
}

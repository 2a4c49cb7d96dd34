//! Acceptance suite. Prints one PASS/FAIL line per criterion and a tally.
//!
//! Failing criteria are reported, not raised: the process exits nonzero on
//! a failure only with `--strict` (`cargo test --test acceptance -- --strict`).

#[path = "../common/mod.rs"]
mod common;

mod criteria;

use std::process::ExitCode;
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    ("1", "LMM calibration, related cohorts", criteria::lmm_calibrated_related),
    ("2", "univariate inflation, related cohorts", criteria::univariate_inflated_related),
    ("3", "hidden confounder: LMM calibrated, univariate inflated", criteria::hidden_confounder),
    ("4", "spectral path vs dense oracle", criteria::dense_oracle),
    ("5", "large-delta limit equals OLS F-test", criteria::degeneracy),
    ("6", "null calibration, unrelated cohorts", criteria::null_calibration),
    ("7", "simulator laws", criteria::simulator_laws),
    ("8", "heritability recovery", criteria::heritability_recovery),
    ("9", "determinism across threads and runs", criteria::determinism),
    ("10", "tail functions vs quadrature", criteria::tail_precision),
];

fn main() -> ExitCode {
    // `cargo test -- <filter>` runs a subset
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {} ({secs:.1}s)", outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && !strict {
        println!("acceptance: {failed} criteria failed (rerun with --strict to exit nonzero)");
    }
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

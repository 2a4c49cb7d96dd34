use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{CalibrateConfig, RunConfig, ScanConfig};
use super::manifest::{unix_now, RunManifest, StageRecord, StageStatus};
use super::{CALIBRATION_SUMMARY, CALIBRATION_TABLE, FIT_FILE, LMM_TABLE, UNIVARIATE_TABLE};
use crate::calibrate::{aggregate, format_table, CalibrationReport, CalibrationSummary};
use crate::error::{Error, Result};
use crate::genotypes::build_rrm;
use crate::lmm::{
    read_association_table, scan_lmm, scan_univariate_with, write_association_table, Method,
};
use crate::simulate::{generate_cohort, generate_grid, read_cohort, write_cohort, Metadata, SimConfig, METADATA_FILE};

/// What a command prints and the exit code it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub message: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(message: String) -> Self {
        Self {
            message,
            exit_code: 0,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn simulate_one(cfg: &SimConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let started = unix_now();
    let cohort = generate_cohort(cfg)?;
    let outputs = write_cohort(&cohort, dir)?;
    RunManifest::record(
        dir,
        Some(cfg.seed),
        StageRecord {
            command: "simulate",
            status: StageStatus::Ok,
            started_unix: started,
            inputs: &[],
            outputs: &outputs,
            config: cfg,
        },
    )?;
    Ok(outputs)
}

/// Writes one cohort into `out`, or with `grid` one subdirectory per grid
/// cell and replicate.
pub fn simulate(cfg: &RunConfig, grid: bool, out: &Path) -> Result<Outcome> {
    cfg.simulate.validate()?;
    create_dir(out)?;
    if !grid {
        let files = simulate_one(&cfg.simulate, out)?;
        return Ok(Outcome::ok(format!(
            "simulated {} x {} cohort (seed {}) into {} ({} files)\n",
            cfg.simulate.n_individuals,
            cfg.simulate.n_snps,
            cfg.simulate.seed,
            out.display(),
            files.len()
        )));
    }
    if cfg.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let started = unix_now();
    let cells = generate_grid(&cfg.simulate, &cfg.grid, cfg.replicates)?;
    for c in &cells {
        c.config.validate()?;
    }
    let written: Vec<Vec<PathBuf>> = cells
        .par_iter()
        .map(|c| simulate_one(&c.config, &out.join(c.name())))
        .collect::<Result<_>>()?;
    let outputs: Vec<PathBuf> = cells
        .iter()
        .zip(written)
        .flat_map(|(c, files)| {
            files
                .into_iter()
                .chain(std::iter::once(out.join(c.name()).join(super::MANIFEST_FILE)))
        })
        .collect();
    RunManifest::record(
        out,
        Some(cfg.simulate.seed),
        StageRecord {
            command: "simulate --grid",
            status: StageStatus::Ok,
            started_unix: started,
            inputs: &[],
            outputs: &outputs,
            config: cfg,
        },
    )?;
    Ok(Outcome::ok(format!(
        "simulated {} cohorts into {}\n",
        cells.len(),
        out.display()
    )))
}

/// Scans a dataset directory, writing one table per method into `out`.
pub fn scan(cfg: &ScanConfig, dataset: &Path, out: &Path) -> Result<Outcome> {
    let started = unix_now();
    let options = cfg.options()?;
    let stored = read_cohort(dataset)?;
    let files = &stored.metadata.files;
    let mut inputs = vec![
        dataset.join(METADATA_FILE),
        dataset.join(&files.genotypes),
        dataset.join(&files.phenotype),
    ];
    let g = stored.genotypes.standardize()?;
    let y = &stored.phenotype;
    create_dir(out)?;
    let mut outputs = Vec::new();
    let mut message = String::new();
    for &method in cfg.method.methods() {
        let (results, name) = match method {
            Method::Lmm => {
                let kernel = build_rrm(&g, &[])?;
                let scan = scan_lmm(&g, y, &kernel, &options)?;
                let fit_path = out.join(FIT_FILE);
                write_toml(&scan.fit, &fit_path)?;
                outputs.push(fit_path);
                writeln!(
                    message,
                    "lmm: delta {:.6e}, heritability {:.4}",
                    scan.fit.delta,
                    scan.fit.heritability()
                )
                .unwrap();
                (scan.results, LMM_TABLE)
            }
            Method::Univariate => (scan_univariate_with(&g, y, cfg.univariate_test)?, UNIVARIATE_TABLE),
        };
        let path = out.join(name);
        write_association_table(&results, &path)?;
        let failed = results.iter().filter(|r| !r.is_ok()).count();
        writeln!(message, "{method}: {} SNPs tested, {failed} failed -> {}", results.len(), path.display()).unwrap();
        outputs.push(path);
    }
    // keep the ground truth next to the tables for `calibrate`
    if !same_dir(dataset, out) {
        let dst = out.join(METADATA_FILE);
        fs::copy(dataset.join(METADATA_FILE), &dst).map_err(|e| Error::io(&dst, e))?;
        outputs.push(dst);
    }
    inputs.dedup();
    RunManifest::record(
        out,
        Some(stored.metadata.seed),
        StageRecord {
            command: "scan",
            status: StageStatus::Ok,
            started_unix: started,
            inputs: &inputs,
            outputs: &outputs,
            config: cfg,
        },
    )?;
    Ok(Outcome::ok(message))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-causal P values of OK rows.
fn non_causal(dir: &Path, table: &Path, causal: &[usize]) -> Result<Vec<f64>> {
    let rows = read_association_table(table)?;
    let mut is_causal = vec![false; rows.len()];
    for &c in causal {
        if c >= is_causal.len() {
            return Err(Error::format(dir, format!("causal index {c} beyond the table")));
        }
        is_causal[c] = true;
    }
    Ok(rows
        .iter()
        .filter(|r| r.is_ok() && !is_causal.get(r.snp_index).copied().unwrap_or(false))
        .map(|r| r.p_value)
        .collect())
}

/// Pools non-causal P values over `results`, writes the curve table and the
/// summary into `out`, and exits nonzero unless the LMM passes.
pub fn calibrate(cfg: &CalibrateConfig, results: &[PathBuf], out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    let started = unix_now();
    let grid = cfg.alpha_grid()?;
    let mut inputs = Vec::new();
    let mut per_dataset: Vec<CalibrationReport> = Vec::new();
    for dir in results {
        let meta_path = dir.join(METADATA_FILE);
        let metadata = Metadata::read(&meta_path)?;
        let causal = metadata
            .causal_indices
            .ok_or_else(|| Error::MissingTruth(dir.clone()))?;
        inputs.push(meta_path);
        for (method, name) in [(Method::Lmm, LMM_TABLE), (Method::Univariate, UNIVARIATE_TABLE)] {
            let table = dir.join(name);
            if !table.exists() {
                continue;
            }
            let p = non_causal(dir, &table, &causal)?;
            inputs.push(table);
            if !p.is_empty() {
                per_dataset.push(CalibrationReport::from_pvalues(method, &p, &grid, cfg.level)?);
            }
        }
    }
    let pooled = |m: Method| match aggregate(&per_dataset, m) {
        Ok(r) => Ok(Some(r)),
        Err(Error::EmptyInput) => Ok(None),
        Err(e) => Err(e),
    };
    let lmm = pooled(Method::Lmm)?;
    let uni = pooled(Method::Univariate)?;
    let reports: Vec<&CalibrationReport> = lmm.iter().chain(uni.iter()).collect();
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let summary = CalibrationSummary::new(&reports, &cfg.criteria(), results.len())?;

    create_dir(out)?;
    let table_path = out.join(CALIBRATION_TABLE);
    let table = format_table(lmm.as_ref(), uni.as_ref())?;
    fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;
    let summary_path = out.join(CALIBRATION_SUMMARY);
    summary.write(&summary_path)?;
    let status = if summary.lmm_pass {
        StageStatus::Ok
    } else {
        StageStatus::CriteriaFailed
    };
    RunManifest::record(
        out,
        None,
        StageRecord {
            command: "calibrate",
            status,
            started_unix: started,
            inputs: &inputs,
            outputs: &[table_path, summary_path],
            config: cfg,
        },
    )?;
    Ok(Outcome {
        message: format_summary(&summary),
        exit_code: if summary.lmm_pass { 0 } else { 1 },
    })
}

fn format_summary(s: &CalibrationSummary) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{} dataset(s), {} alpha points, {:.0}% bands",
        s.n_datasets,
        s.alpha_points,
        100.0 * s.level
    )
    .unwrap();
    writeln!(
        out,
        "{:<11} {:>8} {:>9} {:>10} {:>8} {:>12} {:>10}  verdict",
        "method", "n_tests", "ks_stat", "ks_p", "in_band", "fpr@alpha", "ci_high"
    )
    .unwrap();
    for m in &s.methods {
        let verdict = match (m.calibrated, m.inflated) {
            (true, _) => "calibrated",
            (false, true) => "inflated",
            (false, false) => "not calibrated",
        };
        writeln!(
            out,
            "{:<11} {:>8} {:>9.5} {:>10.3e} {:>8.3} {:>12.5} {:>10.5}  {verdict}",
            m.method.as_str(),
            m.n_tests,
            m.ks_statistic,
            m.ks_p,
            m.in_band_fraction,
            m.fpr_at_inflation_alpha,
            m.ci_high_at_inflation_alpha
        )
        .unwrap();
    }
    writeln!(
        out,
        "criteria: in-band >= {}, KS p > {}, inflation checked at alpha = {}",
        s.criteria.min_in_band_fraction, s.criteria.min_ks_p, s.criteria.inflation_alpha
    )
    .unwrap();
    writeln!(out, "lmm: {}", if s.lmm_pass { "PASS" } else { "FAIL" }).unwrap();
    out
}

fn format_csv(text: &str) -> String {
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|f| pretty_cell(f).len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{:>w$}", pretty_cell(f), w = *w))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn pretty_cell(field: &str) -> String {
    match field.parse::<f64>() {
        Ok(v) if field.contains('e') => format!("{v:.6}"),
        _ => field.to_string(),
    }
}

/// Pretty-prints a calibration summary (`.toml`) or a delimited table.
pub fn report(file: &Path) -> Result<Outcome> {
    let is_toml = file.extension().is_some_and(|e| e == "toml");
    let message = if is_toml {
        format_summary(&CalibrationSummary::read(file)?)
    } else {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        if text.trim().is_empty() {
            return Err(Error::format(file, "empty table"));
        }
        format_csv(&text)
    };
    Ok(Outcome::ok(message))
}

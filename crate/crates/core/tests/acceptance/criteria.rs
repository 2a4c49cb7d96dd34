use std::path::Path;
use std::process::Command;

use rayon::prelude::*;

use crate::common::{self, checks, quad, ScannedCohort};
use crate::Outcome;
use klmm::calibrate::{default_alpha_grid, CalibrationReport, DEFAULT_LEVEL};
use klmm::genotypes::build_rrm;
use klmm::lmm::{
    chi2_upper_tail, f_upper_tail, fit_variance_ratio, format_association_table, scan_lmm,
    scan_ols_f, DeltaGrid, Method, ScanOptions,
};
use klmm::simulate::{generate_cohort, generate_grid, GridSpec, SimConfig};

const BASE_SEED: u64 = 20_240_601;
const MIN_IN_BAND: f64 = 0.9;
const MIN_KS_P: f64 = 0.001;
const INFLATION_ALPHA: f64 = 0.01;

fn related_grid(hidden: bool) -> Vec<ScannedCohort> {
    let base = SimConfig {
        n_individuals: 500,
        n_snps: 2000,
        hidden_enabled: hidden,
        n_hidden: 100,
        hidden_strength: 0.3,
        seed: BASE_SEED + hidden as u64,
        ..SimConfig::default()
    };
    let grid = GridSpec {
        family_fractions: vec![0.5, 0.7, 0.9],
        n_causals: vec![50],
        heritabilities: vec![0.2, 0.4, 0.6],
    };
    let cells = generate_grid(&base, &grid, 1).unwrap();
    cells
        .par_iter()
        .map(|d| common::simulate_and_scan(&d.config, &ScanOptions::default()))
        .collect()
}

fn pooled(sets: &[ScannedCohort], method: Method) -> CalibrationReport {
    let p: Vec<f64> = sets
        .iter()
        .flat_map(|s| {
            let rows = if method == Method::Lmm { &s.lmm } else { &s.univariate };
            common::non_causal_pvalues(rows, &s.cohort)
        })
        .collect();
    CalibrationReport::from_pvalues(method, &p, &default_alpha_grid(), DEFAULT_LEVEL).unwrap()
}

fn lmm_verdict(r: &CalibrationReport) -> (bool, String) {
    let band = r.in_band_fraction();
    let pass = band >= MIN_IN_BAND && r.ks_p > MIN_KS_P;
    (
        pass,
        format!(
            "LMM in-band {:.2} (need >= {MIN_IN_BAND}), KS p {:.3e} (need > {MIN_KS_P}), n_tests {}",
            band, r.ks_p, r.n_tests
        ),
    )
}

fn inflation_verdict(r: &CalibrationReport) -> (bool, String) {
    let fpr = r.fpr_at(INFLATION_ALPHA);
    let (_, hi) = r.band_at(INFLATION_ALPHA).unwrap();
    (
        fpr > hi,
        format!("univariate FPR at {INFLATION_ALPHA} is {fpr:.4} vs ci_high {hi:.4}"),
    )
}

static RELATED: std::sync::OnceLock<Vec<ScannedCohort>> = std::sync::OnceLock::new();

fn related() -> &'static [ScannedCohort] {
    RELATED.get_or_init(|| related_grid(false))
}

pub fn lmm_calibrated_related() -> Outcome {
    let (pass, detail) = lmm_verdict(&pooled(related(), Method::Lmm));
    Outcome::new(pass, detail)
}

pub fn univariate_inflated_related() -> Outcome {
    let (pass, detail) = inflation_verdict(&pooled(related(), Method::Univariate));
    Outcome::new(pass, detail)
}

pub fn hidden_confounder() -> Outcome {
    let sets = related_grid(true);
    let (lmm_ok, lmm) = lmm_verdict(&pooled(&sets, Method::Lmm));
    let (uni_ok, uni) = inflation_verdict(&pooled(&sets, Method::Univariate));
    Outcome::new(lmm_ok && uni_ok, format!("{lmm}; {uni}"))
}

pub fn dense_oracle() -> Outcome {
    let devs: Vec<Result<f64, String>> = (0..50u64)
        .into_par_iter()
        .map(|i| checks::max_deviation(&checks::random_instance(50_000 + i)))
        .collect();
    let mut worst = 0.0f64;
    for d in devs {
        match d {
            Ok(v) => worst = worst.max(v),
            Err(e) => return Outcome::new(false, format!("instance failed: {e}")),
        }
    }
    Outcome::new(worst <= 1e-8, format!("50 instances, worst relative deviation {worst:.2e} (need <= 1e-8)"))
}

pub fn degeneracy() -> Outcome {
    let cfg = SimConfig {
        n_individuals: 300,
        n_snps: 1000,
        seed: BASE_SEED + 5,
        ..SimConfig::default()
    };
    let cohort = generate_cohort(&cfg).unwrap();
    let kernel = build_rrm(&cohort.genotypes, &[]).unwrap();
    let options = ScanOptions {
        delta: Some(DeltaGrid::default().max()),
        ..ScanOptions::default()
    };
    let lmm = scan_lmm(&cohort.genotypes, &cohort.phenotype, &kernel, &options).unwrap();
    let ols = scan_ols_f(&cohort.genotypes, &cohort.phenotype).unwrap();
    let worst = lmm
        .results
        .iter()
        .zip(&ols)
        .map(|(a, b)| (a.p_value - b.p_value).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        worst <= 1e-6,
        format!("delta = {:e}, max |P_lmm - P_ols| = {worst:.2e} over 1000 SNPs (need <= 1e-6)", options.delta.unwrap()),
    )
}

pub fn null_calibration() -> Outcome {
    let sets: Vec<ScannedCohort> = (0..5u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                n_individuals: 500,
                n_snps: 2000,
                n_causal: 0,
                family_fraction: 0.0,
                seed: BASE_SEED + 100 + i,
                ..SimConfig::default()
            };
            common::simulate_and_scan(&cfg, &ScanOptions::default())
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::Lmm, Method::Univariate] {
        let r = pooled(&sets, method);
        let fpr = r.fpr_at(0.05);
        let ok = r.ks_p > 0.01 && (0.040..=0.060).contains(&fpr) && r.n_tests == 10_000;
        pass &= ok;
        parts.push(format!("{method}: KS p {:.3}, FPR(0.05) {fpr:.4}, n {}", r.ks_p, r.n_tests));
    }
    Outcome::new(pass, parts.join("; "))
}

pub fn simulator_laws() -> Outcome {
    let cfg = SimConfig {
        n_individuals: 500,
        n_snps: 5000,
        family_fraction: 1.0,
        seed: BASE_SEED + 7,
        ..SimConfig::default()
    };
    let cohort = generate_cohort(&cfg).unwrap();
    let violations = cohort.mendelian_violations()
        + related().iter().map(|s| s.cohort.mendelian_violations()).sum::<usize>();

    let z = cohort.genotypes.values().unwrap();
    let m = cohort.genotypes.n_snps();
    let fam = cohort.family_of();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..fam.len() {
        for k in (i + 1)..fam.len() {
            if fam[i].is_some() && fam[i] == fam[k] {
                let r: f64 = (0..m).map(|j| z[(i, j)] * z[(k, j)]).sum::<f64>() / m as f64;
                sum += r;
                pairs += 1;
            }
        }
    }
    let sib = sum / pairs as f64;
    let grid = generate_grid(&SimConfig::default(), &GridSpec::full(), 3).unwrap();
    let mut seeds: Vec<u64> = grid.iter().map(|d| d.config.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let pass = violations == 0 && (sib - 0.5).abs() <= 0.05 && grid.len() == 450 && seeds.len() == 450;
    Outcome::new(
        pass,
        format!(
            "Mendelian violations {violations}; sibling correlation {sib:.4} over {pairs} pairs (need 0.5 +/- 0.05); grid {} descriptors, {} distinct seeds",
            grid.len(),
            seeds.len()
        ),
    )
}

pub fn heritability_recovery() -> Outcome {
    let estimates: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                n_individuals: 2000,
                n_snps: 5000,
                heritability: 0.5,
                seed: BASE_SEED + 200 + i,
                ..SimConfig::default()
            };
            let cohort = generate_cohort(&cfg).unwrap();
            let kernel = build_rrm(&cohort.genotypes, &[]).unwrap();
            fit_variance_ratio(&cohort.phenotype, &kernel, &DeltaGrid::default())
                .unwrap()
                .heritability()
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    Outcome::new(
        (mean - 0.5).abs() <= 0.1,
        format!("mean estimate {mean:.4} over 20 seeds (truth 0.5, need +/- 0.1)"),
    )
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_klmm"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    // calibrate may exit 1 on a tiny dataset; only a crash (code > 1) is an error
    match out.status.code() {
        Some(0) | Some(1) => Ok(()),
        _ => Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))),
    }
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    matches!((std::fs::read(a), std::fs::read(b)), (Ok(x), Ok(y)) if x == y)
}

pub fn determinism() -> Outcome {
    // library: scan tables across pool sizes
    let cfg = SimConfig {
        n_individuals: 300,
        n_snps: 600,
        seed: BASE_SEED + 9,
        ..SimConfig::default()
    };
    let cohort = generate_cohort(&cfg).unwrap();
    let kernel = build_rrm(&cohort.genotypes, &[]).unwrap();
    let tables: Vec<String> = [1usize, 8, 1]
        .iter()
        .map(|&t| {
            let options = ScanOptions {
                threads: Some(t),
                ..ScanOptions::default()
            };
            let scan = scan_lmm(&cohort.genotypes, &cohort.phenotype, &kernel, &options).unwrap();
            format_association_table(&scan.results)
        })
        .collect();
    let library_ok = tables.windows(2).all(|w| w[0] == w[1]);

    // end to end through the binary
    let cli = (|| -> Result<Vec<String>, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
        let mut mismatches = Vec::new();
        for rep in ["a", "b"] {
            run(&["--seed", "17", "--out", &d(&format!("data_{rep}")), "simulate", "--n-individuals", "200", "--n-snps", "500", "--n-causal", "10"])?;
        }
        if !same_bytes(&tmp.path().join("data_a/genotypes.klmm"), &tmp.path().join("data_b/genotypes.klmm")) {
            mismatches.push("genotypes".to_string());
        }
        for (threads, out) in [("1", "scan_1"), ("8", "scan_8"), ("1", "scan_1b")] {
            run(&["--threads", threads, "--out", &d(out), "scan", &d("data_a"), "--method", "both"])?;
        }
        for (threads, out, input) in [("1", "cal_1", "scan_1"), ("8", "cal_8", "scan_8")] {
            run(&["--threads", threads, "--out", &d(out), "calibrate", &d(input)])?;
        }
        for other in ["scan_8", "scan_1b"] {
            for f in ["assoc_lmm.csv", "assoc_univariate.csv"] {
                if !same_bytes(&tmp.path().join("scan_1").join(f), &tmp.path().join(other).join(f)) {
                    mismatches.push(format!("{other}/{f}"));
                }
            }
        }
        for f in ["calibration.csv", "calibration_summary.toml"] {
            if !same_bytes(&tmp.path().join("cal_1").join(f), &tmp.path().join("cal_8").join(f)) {
                mismatches.push(format!("cal_8/{f}"));
            }
        }
        Ok(mismatches)
    })();
    match cli {
        Ok(m) => Outcome::new(
            library_ok && m.is_empty(),
            format!(
                "library tables identical: {library_ok}; CLI mismatches: {}",
                if m.is_empty() { "none".to_string() } else { m.join(", ") }
            ),
        ),
        Err(e) => Outcome::new(false, format!("CLI run failed: {e}")),
    }
}

pub fn tail_precision() -> Outcome {
    let f = quad::f_grid()
        .into_iter()
        .map(|(x, d1, d2)| (f_upper_tail(x, d1, d2).unwrap() - quad::f_sf(x, d1, d2)).abs())
        .fold(0.0, f64::max);
    let c = quad::chi2_grid()
        .into_iter()
        .map(|(x, k)| (chi2_upper_tail(x, k).unwrap() - quad::chi2_sf(x, k)).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        f <= 1e-10 && c <= 1e-10,
        format!("200 points each: max |F error| {f:.2e}, max |chi2 error| {c:.2e} (need <= 1e-10)"),
    )
}

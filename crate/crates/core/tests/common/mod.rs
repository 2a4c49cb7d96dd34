//! Shared helpers for integration and acceptance tests: a dense
//! explicit-matrix mixed-model oracle, a quadrature oracle for the tail
//! functions, and cohort/scan plumbing.
#![allow(dead_code)]

pub mod checks;
pub mod dense;
pub mod quad;

use klmm::genotypes::build_rrm;
use klmm::lmm::{scan_lmm, scan_univariate, AssociationResult, ScanOptions};
use klmm::simulate::{generate_cohort, SimConfig, SimulatedCohort};

/// P values of OK rows whose SNP is not causal.
pub fn non_causal_pvalues(results: &[AssociationResult], cohort: &SimulatedCohort) -> Vec<f64> {
    let causal = cohort.is_causal();
    results
        .iter()
        .filter(|r| r.is_ok() && !causal[r.snp_index])
        .map(|r| r.p_value)
        .collect()
}

pub struct ScannedCohort {
    pub cohort: SimulatedCohort,
    pub lmm: Vec<AssociationResult>,
    pub univariate: Vec<AssociationResult>,
    pub delta: f64,
}

pub fn simulate_and_scan(cfg: &SimConfig, options: &ScanOptions) -> ScannedCohort {
    let cohort = generate_cohort(cfg).expect("simulate");
    let kernel = build_rrm(&cohort.genotypes, &[]).expect("kernel");
    let scan = scan_lmm(&cohort.genotypes, &cohort.phenotype, &kernel, options).expect("scan");
    let univariate = scan_univariate(&cohort.genotypes, &cohort.phenotype).expect("univariate");
    ScannedCohort {
        delta: scan.fit.delta,
        lmm: scan.results,
        univariate,
        cohort,
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

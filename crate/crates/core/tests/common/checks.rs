//! Spectral path against the dense oracle on random small instances.

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dense;
use klmm::genotypes::{build_rrm, GenotypeMatrix};
use klmm::lmm::{gls_solve, scan_lmm, Exclusion, ScanOptions};

pub struct Instance {
    pub g: GenotypeMatrix,
    pub y: Vec<f64>,
    pub covariate: Vec<f64>,
    pub delta: f64,
    pub snp: usize,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=200);
    let m = rng.random_range(10..=300);
    let mut columns = Vec::with_capacity(m);
    while columns.len() < m {
        let p: f64 = rng.random_range(0.05..0.5);
        let col: Vec<u8> = (0..n)
            .map(|_| rng.random_bool(p) as u8 + rng.random_bool(p) as u8)
            .collect();
        if col.iter().any(|&c| c != col[0]) {
            columns.push(col);
        }
    }
    let g = GenotypeMatrix::from_columns(n, &columns).unwrap().standardize().unwrap();
    let y = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let covariate = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let delta = 10f64.powf(rng.random_range(-2.0..2.0));
    let snp = rng.random_range(0..m);
    Instance {
        g,
        y,
        covariate,
        delta,
        snp,
    }
}

fn vec_rel(a: &[f64], b: &DVector<f64>) -> f64 {
    let scale = b.norm().max(1e-300);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Largest relative deviation across every compared quantity.
pub fn max_deviation(inst: &Instance) -> Result<f64, String> {
    let g = &inst.g;
    let (n, m) = (g.n_individuals(), g.n_snps());
    let x = dense::standardize(g.counts(), n, m);
    let k = dense::kernel(&x, &[]);
    let kernel = build_rrm(g, &[]).map_err(|e| e.to_string())?;
    let y = DVector::from_column_slice(&inst.y);
    let f_dense = dense::design(n, &[&inst.covariate]);
    let f = Mat::<f64>::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { inst.covariate[i] });
    let xj: Vec<f64> = x.column(inst.snp).iter().copied().collect();
    let mut worst = 0.0f64;

    // full kernel
    let h = dense::shifted(&k, inst.delta);
    let want = dense::gls(&y, &f_dense, &h);
    let got = gls_solve(&inst.y, &f, &kernel, inst.delta, None).map_err(|e| e.to_string())?;
    worst = worst.max(rel(got.reml_loglik, want.reml_loglik));
    worst = worst.max(vec_rel(&got.beta, &want.beta));
    worst = worst.max(rel(got.rss, want.rss));

    // one SNP removed from the kernel, coefficient 1/M
    let xx = DMatrix::from_column_slice(n, 1, &xj);
    let h_minus = &h - &xx * xx.transpose() / m as f64;
    let want = dense::gls(&y, &f_dense, &h_minus);
    let got = gls_solve(&inst.y, &f, &kernel, inst.delta, Some(&xj)).map_err(|e| e.to_string())?;
    worst = worst.max(rel(got.reml_loglik, want.reml_loglik));
    worst = worst.max(vec_rel(&got.beta, &want.beta));

    // downdated solve and log-determinant change
    let (sol, corr) = kernel
        .downdate_solve(g, inst.snp, inst.delta, &inst.y)
        .map_err(|e| e.to_string())?;
    let chol = h_minus.clone().cholesky().ok_or("H_-j not SPD")?;
    let want_sol = chol.solve(&y);
    worst = worst.max(vec_rel(&sol, &want_sol));
    let ld_minus = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    worst = worst.max(rel(kernel.logdet(inst.delta) + corr, ld_minus));

    // scan rows at fixed delta, both exclusion paths
    let (want_f, want_beta) = dense::f_statistic(&y, &xj, &h_minus);
    for exclusion in [Exclusion::Woodbury, Exclusion::Exact] {
        let options = ScanOptions {
            exclusion,
            delta: Some(inst.delta),
            ..ScanOptions::default()
        };
        let scan = scan_lmm(g, &inst.y, &kernel, &options).map_err(|e| e.to_string())?;
        let row = &scan.results[inst.snp];
        // F is a difference of residual sums; measure it against max(F, 1)
        worst = worst.max((row.statistic - want_f).abs() / want_f.abs().max(1.0));
        worst = worst.max(rel(row.beta_hat, want_beta));
    }
    Ok(worst)
}

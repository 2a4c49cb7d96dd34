//! Explicit-matrix reference for the mixed model, built with nalgebra and
//! sharing no code with the spectral path.

use nalgebra::{DMatrix, DVector};

/// Standardized N x M matrix from allele counts (population variance).
pub fn standardize(counts: &[u8], n: usize, m: usize) -> DMatrix<f64> {
    let mut x = DMatrix::from_fn(n, m, |i, j| counts[i * m + j] as f64);
    for j in 0..m {
        let mut col = x.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n as f64).sqrt();
        col /= sd;
    }
    x
}

/// `X_S X_S^T / |S|` over the columns not in `exclude`.
pub fn kernel(x: &DMatrix<f64>, exclude: &[usize]) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..x.ncols()).filter(|j| !exclude.contains(j)).collect();
    let xs = x.select_columns(&keep);
    &xs * xs.transpose() / keep.len() as f64
}

pub struct DenseGls {
    pub beta: DVector<f64>,
    pub rss: f64,
    pub logdet_h: f64,
    pub logdet_xhx: f64,
    pub reml_loglik: f64,
}

/// GLS and profiled REML with covariance proportional to `h`.
pub fn gls(y: &DVector<f64>, f: &DMatrix<f64>, h: &DMatrix<f64>) -> DenseGls {
    let n = y.len();
    let p = f.ncols();
    let chol = h.clone().cholesky().expect("H must be SPD");
    let hinv = chol.inverse();
    let logdet_h: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let xhx = f.transpose() * &hinv * f;
    let xhy = f.transpose() * &hinv * y;
    let xchol = xhx.clone().cholesky().expect("design must be full rank");
    let beta = xchol.solve(&xhy);
    let logdet_xhx: f64 = 2.0 * xchol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let r = y - f * &beta;
    let rss = (r.transpose() * &hinv * &r)[(0, 0)];
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let reml_loglik = -0.5
        * (dof * (2.0 * std::f64::consts::PI * sigma2).ln() + logdet_h + logdet_xhx + dof);
    DenseGls {
        beta,
        rss,
        logdet_h,
        logdet_xhx,
        reml_loglik,
    }
}

/// `K + delta I`.
pub fn shifted(k: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    k + DMatrix::identity(k.nrows(), k.ncols()) * delta
}

/// Design `[1, cols...]`.
pub fn design(n: usize, cols: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len() + 1, |i, c| if c == 0 { 1.0 } else { cols[c - 1][i] })
}

/// Nested F statistic for the last design column.
pub fn f_statistic(y: &DVector<f64>, x: &[f64], h: &DMatrix<f64>) -> (f64, f64) {
    let n = y.len();
    let null = gls(y, &design(n, &[]), h);
    let full = gls(y, &design(n, &[x]), h);
    let f = (null.rss - full.rss) / (full.rss / (n - 2) as f64);
    (f, full.beta[1])
}

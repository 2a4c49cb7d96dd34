use faer::{Mat, Side};

use super::{DeltaGrid, LmmFit};
use crate::error::{Error, Result};
use crate::genotypes::SpectralKernel;

/// Largest acceptable condition number of the fixed-effect normal equations.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;

/// Relative width (in delta) at which golden-section refinement stops.
pub const GOLDEN_REL_WIDTH: f64 = 1e-4;

/// Generalized least squares in the kernel eigenbasis.
///
/// The covariance (up to `sigma_g2`) is `diag(S + delta) - c x x^T` where
/// the optional rank-one term removes one SNP from the kernel.
#[derive(Debug, Clone)]
pub(crate) struct RotatedGls {
    weights: Vec<f64>,
    logdet: f64,
    downdate: Option<Downdate>,
}

#[derive(Debug, Clone)]
struct Downdate {
    wx: Vec<f64>,
    coef: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct GlsFit {
    pub beta: Vec<f64>,
    /// `r^T H^-1 r` at the GLS solution.
    pub rss: f64,
    pub logdet_h: f64,
    pub logdet_xhx: f64,
    pub n: usize,
    pub p: usize,
}

impl GlsFit {
    pub fn dof(&self) -> usize {
        self.n - self.p
    }

    pub fn sigma_g2(&self) -> f64 {
        self.rss / self.dof() as f64
    }

    /// Profiled REML log-likelihood.
    pub fn reml_loglik(&self) -> f64 {
        let dof = self.dof() as f64;
        let sigma2 = self.sigma_g2();
        -0.5 * (dof * (2.0 * std::f64::consts::PI * sigma2).ln()
            + self.logdet_h
            + self.logdet_xhx
            + dof)
    }
}

impl RotatedGls {
    /// `eigenvalues` are the kernel spectrum; `downdate` is the rotated
    /// column and its coefficient.
    pub fn new(eigenvalues: &[f64], delta: f64, downdate: Option<(&[f64], f64)>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        let weights: Vec<f64> = eigenvalues.iter().map(|s| 1.0 / (s + delta)).collect();
        let mut logdet: f64 = eigenvalues.iter().map(|s| (s + delta).ln()).sum();
        let downdate = match downdate {
            Some((x, c)) if c != 0.0 => {
                let wx: Vec<f64> = x.iter().zip(&weights).map(|(a, w)| a * w).collect();
                let q: f64 = wx.iter().zip(x).map(|(a, b)| a * b).sum();
                let denom = 1.0 - c * q;
                if denom <= crate::genotypes::DOWNDATE_TOL {
                    return Err(Error::SingularDowndate(denom));
                }
                logdet += denom.ln();
                Some(Downdate {
                    wx,
                    coef: c / denom,
                })
            }
            _ => None,
        };
        Ok(Self {
            weights,
            logdet,
            downdate,
        })
    }

    /// `a^T H^-1 b`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut plain = 0.0;
        for ((x, y), w) in a.iter().zip(b).zip(&self.weights) {
            plain += x * w * y;
        }
        match &self.downdate {
            None => plain,
            Some(d) => {
                let ax: f64 = d.wx.iter().zip(a).map(|(p, q)| p * q).sum();
                let bx: f64 = d.wx.iter().zip(b).map(|(p, q)| p * q).sum();
                plain + d.coef * ax * bx
            }
        }
    }

    /// Fits `y ~ design` by GLS.
    pub fn fit(&self, y: &[f64], design: &[&[f64]]) -> Result<GlsFit> {
        let p = design.len();
        let n = y.len();
        if p == 0 || p >= n {
            return Err(Error::Dimension(format!("{p} fixed effects for {n} observations")));
        }
        let mut gram = vec![0.0; p * p];
        let mut rhs = vec![0.0; p];
        for a in 0..p {
            for b in 0..=a {
                let v = self.inner(design[a], design[b]);
                gram[a * p + b] = v;
                gram[b * p + a] = v;
            }
            rhs[a] = self.inner(design[a], y);
        }
        let (beta, logdet_xhx) = solve_spd(&gram, &rhs, p)?;
        let mut resid = y.to_vec();
        for (col, b) in design.iter().zip(&beta) {
            for (r, v) in resid.iter_mut().zip(col.iter()) {
                *r -= b * v;
            }
        }
        let rss = self.inner(&resid, &resid).max(0.0);
        Ok(GlsFit {
            beta,
            rss,
            logdet_h: self.logdet,
            logdet_xhx,
            n,
            p,
        })
    }
}

/// Solves a small SPD system, returning the solution and `log|G|`.
fn solve_spd(gram: &[f64], rhs: &[f64], p: usize) -> Result<(Vec<f64>, f64)> {
    let (lo, hi) = sym_eig_range(gram, p)?;
    if !(lo > 0.0) || hi / lo > MAX_DESIGN_CONDITION {
        return Err(Error::SingularDesign);
    }
    // Cholesky
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = gram[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::SingularDesign);
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = rhs.to_vec();
    for i in 0..p {
        for k in 0..i {
            z[i] -= l[i * p + k] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            z[i] -= l[k * p + i] * z[k];
        }
        z[i] /= l[i * p + i];
    }
    let logdet = (0..p).map(|i| 2.0 * l[i * p + i].ln()).sum();
    Ok((z, logdet))
}

fn sym_eig_range(a: &[f64], p: usize) -> Result<(f64, f64)> {
    match p {
        1 => Ok((a[0], a[0])),
        2 => {
            let (x, y, z) = (a[0], a[1], a[3]);
            let mean = 0.5 * (x + z);
            let rad = (0.25 * (x - z) * (x - z) + y * y).sqrt();
            Ok((mean - rad, mean + rad))
        }
        _ => {
            let m = Mat::<f64>::from_fn(p, p, |i, j| a[i * p + j]);
            let ev = m
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|_| Error::SingularDesign)?;
            Ok((ev[0], ev[p - 1]))
        }
    }
}

/// GLS estimate of `y ~ N(F b, sigma_g2 (K + delta I))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsSolution {
    pub beta: Vec<f64>,
    /// `r^T (K + delta I)^-1 r` at the solution.
    pub rss: f64,
    pub reml_loglik: f64,
}

/// Solves the GLS problem in the eigenbasis, optionally with one SNP column
/// removed from the kernel.
///
/// `fixed` is N x p and should contain the intercept.
pub fn gls_solve(
    y: &[f64],
    fixed: &Mat<f64>,
    kernel: &SpectralKernel,
    delta: f64,
    exclude: Option<&[f64]>,
) -> Result<GlsSolution> {
    let rotated = RotatedProblem::new(y, fixed, kernel, exclude)?;
    let fit = rotated.gls(delta)?.fit(&rotated.y, &rotated.design())?;
    Ok(GlsSolution {
        reml_loglik: fit.reml_loglik(),
        rss: fit.rss,
        beta: fit.beta,
    })
}

/// Profiled REML log-likelihood of `y ~ N(F b, sigma_g2 (K + delta I))`.
pub fn reml_loglik(
    y: &[f64],
    fixed: &Mat<f64>,
    kernel: &SpectralKernel,
    delta: f64,
    exclude: Option<&[f64]>,
) -> Result<f64> {
    gls_solve(y, fixed, kernel, delta, exclude).map(|s| s.reml_loglik)
}

/// `y`, the design and an optional downdate column, rotated once into the
/// kernel eigenbasis.
pub(crate) struct RotatedProblem<'k> {
    kernel: &'k SpectralKernel,
    pub y: Vec<f64>,
    pub cols: Vec<Vec<f64>>,
    pub exclude: Option<Vec<f64>>,
}

impl<'k> RotatedProblem<'k> {
    pub fn new(
        y: &[f64],
        fixed: &Mat<f64>,
        kernel: &'k SpectralKernel,
        exclude: Option<&[f64]>,
    ) -> Result<Self> {
        let n = kernel.n();
        if y.len() != n || fixed.nrows() != n {
            return Err(Error::Dimension(format!(
                "kernel is {n}x{n}, y has {} rows, design has {}",
                y.len(),
                fixed.nrows()
            )));
        }
        if let Some(x) = exclude {
            if x.len() != n {
                return Err(Error::Dimension(format!("excluded column has {} rows", x.len())));
            }
        }
        let cols = (0..fixed.ncols())
            .map(|c| {
                let col: Vec<f64> = (0..n).map(|i| fixed[(i, c)]).collect();
                kernel.rotate(&col)
            })
            .collect();
        Ok(Self {
            kernel,
            y: kernel.rotate(y),
            cols,
            exclude: exclude.map(|x| kernel.rotate(x)),
        })
    }

    pub fn design(&self) -> Vec<&[f64]> {
        self.cols.iter().map(|c| c.as_slice()).collect()
    }

    pub fn gls(&self, delta: f64) -> Result<RotatedGls> {
        RotatedGls::new(
            self.kernel.eigenvalues(),
            delta,
            self.exclude.as_deref().map(|x| (x, self.kernel.scale())),
        )
    }
}

/// Maximizes `objective` over the grid, then refines by golden-section
/// search in log-delta inside the bracketing cell.
///
/// Ties on the grid go to the smallest delta; the refined point replaces the
/// grid optimum only if it is strictly better.
pub(crate) fn maximize_on_grid<F>(grid: &DeltaGrid, mut objective: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let pts = grid.points();
    let mut best = (pts[0], f64::NEG_INFINITY);
    let mut best_idx = 0;
    for (i, &d) in pts.iter().enumerate() {
        let v = objective(d)?;
        if v > best.1 {
            best = (d, v);
            best_idx = i;
        }
    }
    if pts.len() < 2 || !best.1.is_finite() {
        return Ok(best);
    }
    let lo = pts[best_idx.saturating_sub(1)].ln();
    let hi = pts[(best_idx + 1).min(pts.len() - 1)].ln();
    let (mut a, mut b) = (lo, hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c.exp())?;
    let mut fd = objective(d.exp())?;
    while b - a > GOLDEN_REL_WIDTH {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d.exp())?;
        }
    }
    let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
    if fx > best.1 {
        best = (x.exp(), fx);
    }
    Ok(best)
}

/// Fits the variance ratio on the intercept-only model by REML.
pub fn fit_variance_ratio(y: &[f64], kernel: &SpectralKernel, grid: &DeltaGrid) -> Result<LmmFit> {
    let n = y.len();
    let ones = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
    let problem = RotatedProblem::new(y, &ones, kernel, None)?;
    let design = problem.design();
    let (delta, _) = maximize_on_grid(grid, |d| {
        problem.gls(d)?.fit(&problem.y, &design).map(|f| f.reml_loglik())
    })?;
    let fit = problem.gls(delta)?.fit(&problem.y, &design)?;
    Ok(LmmFit::from_gls(delta, &fit))
}

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};

use super::GenotypeMatrix;
use crate::error::{Error, Result};

/// Eigenvalues below this are treated as an error rather than rounding noise.
pub const EIGEN_NEG_TOL: f64 = -1e-8;

/// Smallest admissible `1 - c x'A^-1 x` for a leave-one-out downdate.
pub const DOWNDATE_TOL: f64 = 1e-12;

/// Realized relationship matrix `K = X'X'^T / M'` held as `U diag(S) U^T`.
///
/// Eigenvalues are stored nonincreasing; eigenvectors are the columns of `U`.
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    scale: f64,
    source_snp_count: usize,
    excluded: Vec<usize>,
}

/// Dense `X'X'^T / M'` over the standardized columns not in `exclude`.
pub fn dense_kernel(g: &GenotypeMatrix, exclude: &[usize]) -> Result<Mat<f64>> {
    let values = g.values()?;
    let m = g.n_snps();
    let mut dropped = vec![false; m];
    for &j in exclude {
        if j >= m {
            return Err(Error::SnpOutOfRange { index: j, n_snps: m });
        }
        dropped[j] = true;
    }
    let kept: Vec<usize> = (0..m).filter(|&j| !dropped[j]).collect();
    if kept.is_empty() {
        return Err(Error::EmptyKernel);
    }
    let n = g.n_individuals();
    let scale = 1.0 / kept.len() as f64;
    let mut k = Mat::<f64>::zeros(n, n);
    if kept.len() == m {
        matmul(k.as_mut(), Accum::Replace, values.as_ref(), values.transpose(), scale, Par::Seq);
    } else {
        let sub = Mat::<f64>::from_fn(n, kept.len(), |i, c| values[(i, kept[c])]);
        matmul(k.as_mut(), Accum::Replace, sub.as_ref(), sub.transpose(), scale, Par::Seq);
    }
    // exact symmetry keeps the eigensolver input well defined
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = avg;
            k[(j, i)] = avg;
        }
    }
    Ok(k)
}

/// Builds the RRM from a standardized matrix, dropping `exclude` columns, and
/// factorizes it.
pub fn build_rrm(g: &GenotypeMatrix, exclude: &[usize]) -> Result<SpectralKernel> {
    let k = dense_kernel(g, exclude)?;
    let mut excluded = exclude.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    let m_kept = g.n_snps() - excluded.len();
    let mut kernel = SpectralKernel::from_dense(&k, 1.0 / m_kept as f64)?;
    kernel.source_snp_count = m_kept;
    kernel.excluded = excluded;
    Ok(kernel)
}

impl SpectralKernel {
    /// Factorizes a dense symmetric PSD matrix. `scale` is recorded as the
    /// per-column factor used by rank-one downdates.
    pub fn from_dense(k: &Mat<f64>, scale: f64) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n {
            return Err(Error::Dimension(format!("kernel is {}x{}", n, k.ncols())));
        }
        let evd = k
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenFailure)?;
        let s = evd.S();
        let u = evd.U();
        // faer returns nondecreasing order; flip to nonincreasing
        let mut eigenvalues = Vec::with_capacity(n);
        let mut eigenvectors = Mat::<f64>::zeros(n, n);
        for (dst, src) in (0..n).rev().enumerate() {
            let lambda = s[src];
            if lambda < EIGEN_NEG_TOL {
                return Err(Error::NegativeEigenvalue(lambda));
            }
            eigenvalues.push(lambda.max(0.0));
            eigenvectors.col_mut(dst).copy_from(u.col(src));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
            scale,
            source_snp_count: 0,
            excluded: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigenvectors
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn source_snp_count(&self) -> usize {
        self.source_snp_count
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `U^T v`.
    pub fn rotate(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n(), "vector length must match kernel size");
        (0..self.n())
            .map(|k| dot(self.eigvec(k), v))
            .collect()
    }

    /// `U v`.
    pub fn unrotate(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n, "vector length must match kernel size");
        let mut out = vec![0.0; n];
        for (k, &coef) in v.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            for (o, u) in out.iter_mut().zip(self.eigvec(k)) {
                *o += coef * u;
            }
        }
        out
    }

    /// `U^T X` for an N x p matrix.
    pub fn rotate_matrix(&self, x: &Mat<f64>) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.n(), x.ncols());
        matmul(
            out.as_mut(),
            Accum::Replace,
            self.eigenvectors.transpose(),
            x.as_ref(),
            1.0,
            Par::Seq,
        );
        out
    }

    /// Dense reconstruction `U diag(S) U^T`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let n = self.n();
        let scaled = Mat::<f64>::from_fn(n, n, |i, k| self.eigenvectors[(i, k)] * self.eigenvalues[k]);
        let mut out = Mat::<f64>::zeros(n, n);
        matmul(
            out.as_mut(),
            Accum::Replace,
            scaled.as_ref(),
            self.eigenvectors.transpose(),
            1.0,
            Par::Seq,
        );
        out
    }

    /// `(K + delta I)^-1 rhs`.
    pub fn solve(&self, delta: f64, rhs: &[f64]) -> Vec<f64> {
        let rot: Vec<f64> = self
            .rotate(rhs)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(b, s)| b / (s + delta))
            .collect();
        self.unrotate(&rot)
    }

    /// `log |K + delta I|`.
    pub fn logdet(&self, delta: f64) -> f64 {
        self.eigenvalues.iter().map(|s| (s + delta).ln()).sum()
    }

    /// Leave-one-SNP-out solve for a column that was part of this kernel.
    ///
    /// Returns `(K - c x_j x_j^T + delta I)^-1 rhs` and the log-determinant
    /// change `log(1 - c x_j^T A^-1 x_j)` with `A = K + delta I`, `c = scale`.
    pub fn downdate_solve(
        &self,
        g: &GenotypeMatrix,
        j: usize,
        delta: f64,
        rhs: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        if self.excluded.binary_search(&j).is_ok() {
            return Err(Error::Domain(format!("SNP {j} is not part of this kernel")));
        }
        let x = g.column(j)?;
        self.downdate_solve_column(x, self.scale, delta, rhs)
    }

    /// Rank-one Woodbury downdate against the eigenbasis with an explicit
    /// coefficient `c`; `c = 0` gives the plain solve.
    pub fn downdate_solve_column(
        &self,
        x: &[f64],
        c: f64,
        delta: f64,
        rhs: &[f64],
    ) -> Result<(Vec<f64>, f64)> {
        if !(delta > 0.0) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        let n = self.n();
        if x.len() != n || rhs.len() != n {
            return Err(Error::Dimension(format!(
                "kernel is {n}x{n}, got column {} and rhs {}",
                x.len(),
                rhs.len()
            )));
        }
        let xr = self.rotate(x);
        let br = self.rotate(rhs);
        let w: Vec<f64> = self.eigenvalues.iter().map(|s| 1.0 / (s + delta)).collect();
        let mut q = 0.0;
        let mut xb = 0.0;
        for k in 0..n {
            q += w[k] * xr[k] * xr[k];
            xb += w[k] * xr[k] * br[k];
        }
        let denom = 1.0 - c * q;
        if denom <= DOWNDATE_TOL {
            return Err(Error::SingularDowndate(denom));
        }
        let coef = c * xb / denom;
        let sol: Vec<f64> = (0..n).map(|k| w[k] * (br[k] + coef * xr[k])).collect();
        Ok((self.unrotate(&sol), denom.ln()))
    }

    fn eigvec(&self, k: usize) -> &[f64] {
        self.eigenvectors
            .col(k)
            .try_as_col_major()
            .expect("faer columns are contiguous")
            .as_slice()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

use faer::Mat;
use rayon::prelude::*;

use super::reml::{fit_variance_ratio, maximize_on_grid, RotatedGls};
use super::{
    floor_p, with_threads, AssociationResult, Exclusion, LmmFit, Method, ScanOptions, Status,
};
use crate::error::{Error, Result};
use crate::genotypes::{build_rrm, GenotypeMatrix, SpectralKernel};
use crate::lmm::dist::f_upper_tail;

/// Output of an LMM scan: the shared variance fit and one row per SNP.
#[derive(Debug, Clone)]
pub struct LmmScan {
    pub fit: LmmFit,
    pub results: Vec<AssociationResult>,
}

/// Tests every SNP of `g` with the mixed model.
///
/// The variance ratio is fitted once on the intercept-only model with
/// `kernel` (unless `options.delta` pins it) and held fixed per SNP; with
/// `refit_per_snp` it is refitted on `[1, x_j]` under that SNP's
/// leave-one-out covariance instead.
pub fn scan_lmm(
    g: &GenotypeMatrix,
    y: &[f64],
    kernel: &SpectralKernel,
    options: &ScanOptions,
) -> Result<LmmScan> {
    let n = g.n_individuals();
    if y.len() != n || kernel.n() != n {
        return Err(Error::Dimension(format!(
            "{n} individuals, {} phenotypes, kernel {}",
            y.len(),
            kernel.n()
        )));
    }
    if n < 3 {
        return Err(Error::Dimension("need at least 3 individuals".into()));
    }
    let values = g.values()?;
    let fit = match options.delta {
        None => fit_variance_ratio(y, kernel, &options.grid)?,
        Some(d) => {
            let ones = vec![1.0; n];
            let yr = kernel.rotate(y);
            let onesr = kernel.rotate(&ones);
            let gls = RotatedGls::new(kernel.eigenvalues(), d, None)?.fit(&yr, &[&onesr])?;
            LmmFit::from_gls(d, &gls)
        }
    };
    let delta = fit.delta;

    let results = with_threads(options.threads, || match options.exclusion {
        Exclusion::Exact => scan_exact(g, y, kernel, delta, options),
        Exclusion::Woodbury | Exclusion::None => {
            scan_rotated(g, values, y, kernel, delta, options)
        }
    })??;
    Ok(LmmScan { fit, results })
}

fn scan_rotated(
    g: &GenotypeMatrix,
    values: &Mat<f64>,
    y: &[f64],
    kernel: &SpectralKernel,
    delta: f64,
    options: &ScanOptions,
) -> Result<Vec<AssociationResult>> {
    let n = g.n_individuals();
    let xr = kernel.rotate_matrix(values);
    let yr = kernel.rotate(y);
    let onesr = kernel.rotate(&vec![1.0; n]);
    let woodbury = options.exclusion == Exclusion::Woodbury;
    let results = (0..g.n_snps())
        .into_par_iter()
        .map(|j| {
            let x = xr
                .col(j)
                .try_as_col_major()
                .expect("faer columns are contiguous")
                .as_slice();
            let downdate = if woodbury && kernel.excluded().binary_search(&j).is_err() {
                Some((x, kernel.scale()))
            } else {
                None
            };
            test_snp(j, kernel.eigenvalues(), &yr, &onesr, x, downdate, delta, options)
        })
        .collect();
    Ok(results)
}

fn scan_exact(
    g: &GenotypeMatrix,
    y: &[f64],
    kernel: &SpectralKernel,
    delta: f64,
    options: &ScanOptions,
) -> Result<Vec<AssociationResult>> {
    let n = g.n_individuals();
    let ones = vec![1.0; n];
    (0..g.n_snps())
        .into_par_iter()
        .map(|j| {
            let kj = match build_rrm(g, &[j]) {
                Ok(k) => k,
                // a single-SNP matrix has nothing left once the test SNP is removed
                Err(Error::EmptyKernel) => {
                    return Ok(AssociationResult::failed(j, Method::Lmm, Status::SingularDowndate))
                }
                Err(e) => return Err(e),
            };
            // same covariance as the downdate path: s X'X'^T + delta I is
            // proportional to s_j X'X'^T + delta (s_j / s) I
            let dj = delta * kj.scale() / kernel.scale();
            let x = kj.rotate(g.column(j)?);
            let yr = kj.rotate(y);
            let onesr = kj.rotate(&ones);
            Ok(test_snp(j, kj.eigenvalues(), &yr, &onesr, &x, None, dj, options))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn test_snp(
    j: usize,
    eigenvalues: &[f64],
    yr: &[f64],
    onesr: &[f64],
    x: &[f64],
    downdate: Option<(&[f64], f64)>,
    delta: f64,
    options: &ScanOptions,
) -> AssociationResult {
    let outcome = (|| {
        let delta = if options.refit_per_snp {
            maximize_on_grid(&options.grid, |d| {
                RotatedGls::new(eigenvalues, d, downdate)?
                    .fit(yr, &[onesr, x])
                    .map(|f| f.reml_loglik())
            })?
            .0
        } else {
            delta
        };
        let gls = RotatedGls::new(eigenvalues, delta, downdate)?;
        let null = gls.fit(yr, &[onesr])?;
        let full = gls.fit(yr, &[onesr, x])?;
        let dof = (yr.len() - 2) as u64;
        let f = if full.rss > 0.0 {
            ((null.rss - full.rss) / (full.rss / dof as f64)).max(0.0)
        } else {
            f64::INFINITY
        };
        let p = floor_p(f_upper_tail(f, 1, dof)?);
        Ok::<_, Error>(AssociationResult {
            snp_index: j,
            beta_hat: full.beta[1],
            statistic: f,
            p_value: p,
            method: Method::Lmm,
            status: Status::Ok,
        })
    })();
    match outcome {
        Ok(r) => r,
        Err(Error::SingularDowndate(_)) => {
            AssociationResult::failed(j, Method::Lmm, Status::SingularDowndate)
        }
        Err(_) => AssociationResult::failed(j, Method::Lmm, Status::SingularDesign),
    }
}

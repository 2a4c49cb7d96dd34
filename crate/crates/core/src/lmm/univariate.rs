use rayon::prelude::*;

use super::dist::{chi2_upper_tail, f_upper_tail};
use super::{floor_p, AssociationResult, Method, Status, UnivariateTest};
use crate::error::{Error, Result};
use crate::genotypes::GenotypeMatrix;

struct OlsFit {
    beta: f64,
    rss0: f64,
    rss1: f64,
}

fn ols(x: &[f64], yc: &[f64], rss0: f64) -> OlsFit {
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(yc) {
        let xc = xi - xbar;
        sxx += xc * xc;
        sxy += xc * yi;
    }
    let beta = sxy / sxx;
    let rss1: f64 = x
        .iter()
        .zip(yc)
        .map(|(xi, yi)| {
            let r = yi - beta * (xi - xbar);
            r * r
        })
        .sum();
    OlsFit { beta, rss0, rss1 }
}

fn centered(y: &[f64]) -> (Vec<f64>, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let rss0 = yc.iter().map(|v| v * v).sum();
    (yc, rss0)
}

/// Per-SNP OLS scan with the chosen test.
pub fn scan_univariate_with(g: &GenotypeMatrix, y: &[f64], test: UnivariateTest) -> Result<Vec<AssociationResult>> {
    let n = g.n_individuals();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} individuals, {} phenotypes", y.len())));
    }
    if n < 3 {
        return Err(Error::Dimension("need at least 3 individuals".into()));
    }
    g.values()?;
    let (yc, rss0) = centered(y);
    (0..g.n_snps())
        .into_par_iter()
        .map(|j| {
            let fit = ols(g.column(j)?, &yc, rss0);
            let (stat, p) = if !(fit.rss0 > 0.0) {
                (0.0, 1.0)
            } else if fit.rss1 <= fit.rss0 * 1e-300 {
                (f64::INFINITY, 0.0)
            } else {
                match test {
                    UnivariateTest::Lrt => {
                        let stat = (n as f64 * (fit.rss0 / fit.rss1).ln()).max(0.0);
                        (stat, chi2_upper_tail(stat, 1)?)
                    }
                    UnivariateTest::F => {
                        let dof = (n - 2) as u64;
                        let stat = ((fit.rss0 - fit.rss1) / (fit.rss1 / dof as f64)).max(0.0);
                        (stat, f_upper_tail(stat, 1, dof)?)
                    }
                }
            };
            Ok(AssociationResult {
                snp_index: j,
                beta_hat: fit.beta,
                statistic: stat,
                p_value: floor_p(p),
                method: Method::Univariate,
                status: Status::Ok,
            })
        })
        .collect()
}

/// Ordinary least squares of `y` on `[1, x_j]` per SNP with a
/// likelihood-ratio test, `N log(RSS0 / RSS1)` against chi-square(1).
pub fn scan_univariate(g: &GenotypeMatrix, y: &[f64]) -> Result<Vec<AssociationResult>> {
    scan_univariate_with(g, y, UnivariateTest::Lrt)
}

/// Ordinary least squares F-test, `F(1, N - 2)`, per SNP.
pub fn scan_ols_f(g: &GenotypeMatrix, y: &[f64]) -> Result<Vec<AssociationResult>> {
    scan_univariate_with(g, y, UnivariateTest::F)
}

//! Linear mixed model association testing.
//!
//! The model is `y ~ N(1 mu + x* beta*, sigma_g2 K + sigma_e2 I)` with `K`
//! the realized relationship matrix. Everything is evaluated in the
//! eigenbasis of `K`, where the covariance is diagonal, so a REML profile
//! costs O(N) once `y` and the design are rotated.

pub mod dist;
mod reml;
mod scan;
mod table;
mod univariate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dist::{chi2_upper_tail, f_upper_tail};
pub use reml::{fit_variance_ratio, gls_solve, reml_loglik, GlsSolution, GOLDEN_REL_WIDTH, MAX_DESIGN_CONDITION};
pub use scan::{scan_lmm, LmmScan};
pub use table::{format_association_table, read_association_table, write_association_table, HEADER as ASSOCIATION_HEADER};
pub use univariate::{scan_ols_f, scan_univariate, scan_univariate_with};

use crate::error::{Error, Result};

/// P values are clamped to this floor instead of underflowing to zero.
pub const P_FLOOR: f64 = 1e-300;

/// Increasing grid of candidate `delta = sigma_e2 / sigma_g2` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaGrid {
    points: Vec<f64>,
}

impl DeltaGrid {
    pub const DEFAULT_POINTS: usize = 100;
    pub const DEFAULT_MIN: f64 = 1e-5;
    pub const DEFAULT_MAX: f64 = 1e5;

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("delta grid is empty".into()));
        }
        if points.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain("delta grid values must be positive".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("delta grid must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `n` log-spaced points covering `[lo, hi]`.
    pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 || !(lo > 0.0) || !(hi >= lo) {
            return Err(Error::Domain(format!("bad delta grid ({n} points on [{lo}, {hi}])")));
        }
        if n == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
        pts[0] = lo;
        pts[n - 1] = hi;
        Self::new(pts)
    }

    pub fn with_points(n: usize) -> Result<Self> {
        Self::log_spaced(n, Self::DEFAULT_MIN, Self::DEFAULT_MAX)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn max(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

impl Default for DeltaGrid {
    fn default() -> Self {
        Self::with_points(Self::DEFAULT_POINTS).unwrap()
    }
}

/// Fitted variance components and fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub delta: f64,
    pub sigma_g2: f64,
    pub sigma_e2: f64,
    /// Intercept first, then any further fixed effects.
    pub fixed_effects: Vec<f64>,
    pub reml_loglik: f64,
    pub dof_residual: usize,
}

impl LmmFit {
    fn from_gls(delta: f64, fit: &reml::GlsFit) -> Self {
        let sigma_g2 = fit.sigma_g2();
        Self {
            delta,
            sigma_g2,
            sigma_e2: delta * sigma_g2,
            fixed_effects: fit.beta.clone(),
            reml_loglik: fit.reml_loglik(),
            dof_residual: fit.dof(),
        }
    }

    /// `sigma_g2 / (sigma_g2 + sigma_e2)`.
    pub fn heritability(&self) -> f64 {
        1.0 / (1.0 + self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lmm,
    Univariate,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lmm => "lmm",
            Method::Univariate => "univariate",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmm" => Ok(Method::Lmm),
            "univariate" => Ok(Method::Univariate),
            _ => Err(Error::Domain(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    SingularDowndate,
    SingularDesign,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::SingularDowndate => "singular_downdate",
            Status::SingularDesign => "singular_design",
        }
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Status::Ok),
            "singular_downdate" => Ok(Status::SingularDowndate),
            "singular_design" => Ok(Status::SingularDesign),
            _ => Err(Error::Domain(format!("unknown status {s:?}"))),
        }
    }
}

/// Per-SNP test outcome. Failed tests keep their row with NaN values and a
/// non-`Ok` status.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    pub snp_index: usize,
    pub beta_hat: f64,
    /// F statistic for the LMM; for the univariate scan, the statistic of the
    /// selected test (likelihood ratio by default).
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub status: Status,
}

impl AssociationResult {
    pub(crate) fn failed(snp_index: usize, method: Method, status: Status) -> Self {
        Self {
            snp_index,
            beta_hat: f64::NAN,
            statistic: f64::NAN,
            p_value: f64::NAN,
            method,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// How the test SNP is removed from the similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusion {
    /// Rank-one correction against the full-kernel eigenbasis.
    #[default]
    Woodbury,
    /// Rebuild and refactorize the kernel without the SNP.
    Exact,
    /// Keep the SNP in the kernel.
    None,
}

impl FromStr for Exclusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "woodbury" => Ok(Exclusion::Woodbury),
            "exact" => Ok(Exclusion::Exact),
            "none" => Ok(Exclusion::None),
            _ => Err(Error::Domain(format!("unknown exclusion mode {s:?}"))),
        }
    }
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exclusion::Woodbury => "woodbury",
            Exclusion::Exact => "exact",
            Exclusion::None => "none",
        })
    }
}

/// Test used by the univariate baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnivariateTest {
    #[default]
    Lrt,
    F,
}

impl FromStr for UnivariateTest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrt" => Ok(UnivariateTest::Lrt),
            "f" => Ok(UnivariateTest::F),
            _ => Err(Error::Domain(format!("unknown univariate test {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub exclusion: Exclusion,
    pub refit_per_snp: bool,
    pub grid: DeltaGrid,
    /// Use this delta instead of fitting one.
    pub delta: Option<f64>,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            exclusion: Exclusion::Woodbury,
            refit_per_snp: false,
            grid: DeltaGrid::default(),
            delta: None,
            threads: None,
        }
    }
}

pub(crate) fn floor_p(p: f64) -> f64 {
    p.max(P_FLOOR)
}

/// Runs `f` inside a pool of `threads` workers, or directly when `None`.
pub(crate) fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

//! Run configuration file.
//!
//! ```toml
//! replicates = 3
//!
//! [simulate]        # any SimConfig field
//! n_individuals = 500
//! n_snps = 2000
//!
//! [grid]            # lists used by `simulate --grid`
//! family_fractions = [0.5, 0.6, 0.7, 0.8, 0.9]
//!
//! [scan]
//! method = "both"   # lmm | univariate | both
//! exclusion = "woodbury"
//!
//! [calibrate]
//! alpha_points = 50
//! level = 0.95
//! ```
//!
//! Every key is optional. Command-line flags override the file, which
//! overrides the defaults.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::{
    alpha_grid, CalibrationCriteria, DEFAULT_ALPHA_MAX, DEFAULT_ALPHA_MIN, DEFAULT_ALPHA_POINTS,
    DEFAULT_LEVEL,
};
use crate::error::{Error, Result};
use crate::lmm::{DeltaGrid, Exclusion, Method, ScanOptions, UnivariateTest};
use crate::simulate::{GridSpec, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub replicates: usize,
    pub simulate: SimConfig,
    pub grid: GridSpec,
    pub scan: ScanConfig,
    pub calibrate: CalibrateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            replicates: 1,
            simulate: SimConfig::default(),
            grid: GridSpec::default(),
            scan: ScanConfig::default(),
            calibrate: CalibrateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Which methods a scan runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Lmm,
    Univariate,
    #[default]
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> &'static [Method] {
        match self {
            Self::Lmm => &[Method::Lmm],
            Self::Univariate => &[Method::Univariate],
            Self::Both => &[Method::Lmm, Method::Univariate],
        }
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmm" => Ok(Self::Lmm),
            "univariate" => Ok(Self::Univariate),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown method {s:?} (lmm|univariate|both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub method: MethodChoice,
    pub exclusion: Exclusion,
    pub refit_per_snp: bool,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub univariate_test: UnivariateTest,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            method: MethodChoice::Both,
            exclusion: Exclusion::Woodbury,
            refit_per_snp: false,
            grid_points: DeltaGrid::DEFAULT_POINTS,
            delta: None,
            univariate_test: UnivariateTest::Lrt,
        }
    }
}

impl ScanConfig {
    pub fn options(&self) -> Result<ScanOptions> {
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("delta must be positive, got {d}")));
            }
        }
        Ok(ScanOptions {
            exclusion: self.exclusion,
            refit_per_snp: self.refit_per_snp,
            grid: DeltaGrid::with_points(self.grid_points)
                .map_err(|e| Error::Config(e.to_string()))?,
            delta: self.delta,
            threads: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub alpha_points: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub level: f64,
    pub min_in_band_fraction: f64,
    pub min_ks_p: f64,
    pub inflation_alpha: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        let c = CalibrationCriteria::default();
        Self {
            alpha_points: DEFAULT_ALPHA_POINTS,
            alpha_min: DEFAULT_ALPHA_MIN,
            alpha_max: DEFAULT_ALPHA_MAX,
            level: DEFAULT_LEVEL,
            min_in_band_fraction: c.min_in_band_fraction,
            min_ks_p: c.min_ks_p,
            inflation_alpha: c.inflation_alpha,
        }
    }
}

impl CalibrateConfig {
    pub fn alpha_grid(&self) -> Result<Vec<f64>> {
        alpha_grid(self.alpha_points, self.alpha_min, self.alpha_max)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn criteria(&self) -> CalibrationCriteria {
        CalibrationCriteria {
            min_in_band_fraction: self.min_in_band_fraction,
            min_ks_p: self.min_ks_p,
            inflation_alpha: self.inflation_alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must be in (0, 1), got {}", self.level)));
        }
        self.alpha_grid().map(|_| ())
    }
}

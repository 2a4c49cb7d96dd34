//! P-value calibration among non-causal SNPs: false-positive-rate curves,
//! exact binomial bands and a Kolmogorov-Smirnov uniformity test.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmm::dist::beta_quantile;
use crate::lmm::Method;

pub const DEFAULT_ALPHA_POINTS: usize = 50;
pub const DEFAULT_ALPHA_MIN: f64 = 1e-4;
pub const DEFAULT_ALPHA_MAX: f64 = 0.5;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Below this sample size the KS p value is computed exactly.
pub const KS_EXACT_BELOW: usize = 35;

/// `n` log-spaced thresholds on `[lo, hi]`.
pub fn alpha_grid(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 || !(lo > 0.0) || !(hi < 1.0) || hi < lo {
        return Err(Error::Domain(format!("bad alpha grid ({n} points on [{lo}, {hi}])")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    Ok(g)
}

pub fn default_alpha_grid() -> Vec<f64> {
    alpha_grid(DEFAULT_ALPHA_POINTS, DEFAULT_ALPHA_MIN, DEFAULT_ALPHA_MAX).unwrap()
}

fn check_alpha_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    if grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("alpha grid must be increasing inside (0, 1)".into()));
    }
    Ok(())
}

fn sorted_pvalues(pvals: &[f64]) -> Result<Vec<f64>> {
    if pvals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pvals.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Domain("P values must lie in [0, 1]".into()));
    }
    let mut v = pvals.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn count_at_most(sorted: &[f64], alpha: f64) -> usize {
    sorted.partition_point(|&p| p <= alpha)
}

/// Fraction of P values `<= alpha` for each threshold.
pub fn fpr_curve(pvals: &[f64], alpha_grid: &[f64]) -> Result<Vec<f64>> {
    check_alpha_grid(alpha_grid)?;
    let sorted = sorted_pvalues(pvals)?;
    Ok(fpr_from_sorted(&sorted, alpha_grid))
}

fn fpr_from_sorted(sorted: &[f64], alpha_grid: &[f64]) -> Vec<f64> {
    let n = sorted.len() as f64;
    alpha_grid
        .iter()
        .map(|&a| count_at_most(sorted, a) as f64 / n)
        .collect()
}

fn cp_lower(k: u64, n: u64, tail: f64) -> Result<f64> {
    if k == 0 {
        Ok(0.0)
    } else {
        beta_quantile(tail, k as f64, (n - k + 1) as f64)
    }
}

fn cp_upper(k: u64, n: u64, tail: f64) -> Result<f64> {
    if k >= n {
        Ok(1.0)
    } else {
        beta_quantile(1.0 - tail, (k + 1) as f64, (n - k) as f64)
    }
}

/// Band for the observed false-positive rate of `n_tests` calibrated P
/// values at threshold `alpha`, built from Clopper-Pearson bounds.
///
/// With expected count `n alpha` between the integers `k0 <= k1`, the lower
/// edge is the Clopper-Pearson lower bound at `k1` and the upper edge the
/// upper bound at `k0` (both equal `k` when `n alpha` is integral). Edges are
/// clipped so that `low <= alpha <= high`.
pub fn calibrated_band(alpha: f64, n_tests: usize, level: f64) -> Result<(f64, f64)> {
    if n_tests == 0 {
        return Err(Error::Domain("band needs n_tests >= 1".into()));
    }
    if !(0.0..=1.0).contains(&alpha) || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("band(alpha={alpha}, level={level})")));
    }
    let n = n_tests as u64;
    let expected = alpha * n as f64;
    let nearest = expected.round();
    let (k0, k1) = if (expected - nearest).abs() < 1e-9 * expected.max(1.0) {
        (nearest as u64, nearest as u64)
    } else {
        (expected.floor() as u64, expected.ceil() as u64)
    };
    let tail = 0.5 * (1.0 - level);
    let low = cp_lower(k1, n, tail)?.min(alpha);
    let high = cp_upper(k0, n, tail)?.max(alpha);
    Ok((low, high))
}

/// One-sample KS test of uniformity on `[0, 1]`.
pub fn ks_uniformity(pvals: &[f64]) -> Result<(f64, f64)> {
    let sorted = sorted_pvalues(pvals)?;
    let d = ks_statistic_sorted(&sorted);
    Ok((d, ks_pvalue(d, sorted.len())))
}

fn ks_statistic_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let above = (i + 1) as f64 / n - p;
            let below = p - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// `P(D_n >= d)`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        return 0.0;
    }
    if n < KS_EXACT_BELOW {
        (1.0 - kolmogorov_cdf_exact(n, d)).clamp(0.0, 1.0)
    } else {
        let sn = (n as f64).sqrt();
        kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
    }
}

/// Complementary Kolmogorov distribution `Q(l) = 2 sum (-1)^(j-1) exp(-2 j^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-lambda form converges faster here
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut s = 0.0;
        let mut k = 1;
        loop {
            let term = y.powi(k * k);
            s += term;
            if term < 1e-17 || k > 100 {
                break;
            }
            k += 2;
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Exact `P(D_n < d)` by the Marsaglia-Tsang-Wang matrix method.
pub fn kolmogorov_cdf_exact(n: usize, d: f64) -> f64 {
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nd;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            hm[i * m + j] = if i + 1 >= j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut eq) = matrix_power(&hm, m, n);
    let mut s = q[(k - 1) * m + (k - 1)];
    for i in 1..=n {
        s = s * i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            eq -= 140;
        }
    }
    s * 10f64.powi(eq)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    c
}

/// `a^n` with a decimal exponent kept separately to avoid overflow.
fn matrix_power(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e_half) = matrix_power(a, m, n / 2);
    let mut v = mat_mul(&half, &half, m);
    let mut e = 2 * e_half;
    if n % 2 == 1 {
        v = mat_mul(a, &v, m);
    }
    if v[(m / 2) * m + m / 2] > 1e140 {
        for x in v.iter_mut() {
            *x *= 1e-140;
        }
        e += 140;
    }
    (v, e)
}

/// Calibration of one method's pooled non-causal P values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub alpha_grid: Vec<f64>,
    pub fpr: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub level: f64,
    pub n_tests: usize,
    pub ks_statistic: f64,
    pub ks_p: f64,
    /// Sorted pooled P values.
    #[serde(skip)]
    pvalues: Vec<f64>,
}

impl CalibrationReport {
    pub fn from_pvalues(method: Method, pvals: &[f64], alpha_grid: &[f64], level: f64) -> Result<Self> {
        check_alpha_grid(alpha_grid)?;
        let sorted = sorted_pvalues(pvals)?;
        Self::from_sorted(method, sorted, alpha_grid, level)
    }

    fn from_sorted(method: Method, sorted: Vec<f64>, alpha_grid: &[f64], level: f64) -> Result<Self> {
        let n = sorted.len();
        let fpr = fpr_from_sorted(&sorted, alpha_grid);
        let mut ci_low = Vec::with_capacity(alpha_grid.len());
        let mut ci_high = Vec::with_capacity(alpha_grid.len());
        for &a in alpha_grid {
            let (lo, hi) = calibrated_band(a, n, level)?;
            ci_low.push(lo);
            ci_high.push(hi);
        }
        let ks_statistic = ks_statistic_sorted(&sorted);
        Ok(Self {
            method,
            alpha_grid: alpha_grid.to_vec(),
            fpr,
            ci_low,
            ci_high,
            level,
            n_tests: n,
            ks_statistic,
            ks_p: ks_pvalue(ks_statistic, n),
            pvalues: sorted,
        })
    }

    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }

    /// Fraction of grid points where the curve lies inside the band.
    pub fn in_band_fraction(&self) -> f64 {
        let inside = self
            .fpr
            .iter()
            .zip(self.ci_low.iter().zip(&self.ci_high))
            .filter(|(f, (lo, hi))| **f >= **lo && **f <= **hi)
            .count();
        inside as f64 / self.fpr.len() as f64
    }

    pub fn fpr_at(&self, alpha: f64) -> f64 {
        count_at_most(&self.pvalues, alpha) as f64 / self.n_tests as f64
    }

    pub fn band_at(&self, alpha: f64) -> Result<(f64, f64)> {
        calibrated_band(alpha, self.n_tests, self.level)
    }

    /// Whether the observed rate at `alpha` is above the calibrated band.
    pub fn inflated_at(&self, alpha: f64) -> Result<bool> {
        Ok(self.fpr_at(alpha) > self.band_at(alpha)?.1)
    }
}

/// Pools P values across datasets for one method and recomputes everything.
pub fn aggregate(reports: &[CalibrationReport], method: Method) -> Result<CalibrationReport> {
    let selected: Vec<&CalibrationReport> = reports.iter().filter(|r| r.method == method).collect();
    let first = selected.first().ok_or(Error::EmptyInput)?;
    if selected
        .iter()
        .any(|r| r.alpha_grid != first.alpha_grid || r.level != first.level)
    {
        return Err(Error::Domain("reports use different alpha grids or levels".into()));
    }
    let mut pooled: Vec<f64> = selected.iter().flat_map(|r| r.pvalues.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    CalibrationReport::from_sorted(method, pooled, &first.alpha_grid, first.level)
}

/// Pass/fail thresholds applied to a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCriteria {
    pub min_in_band_fraction: f64,
    pub min_ks_p: f64,
    /// Threshold at which inflation is checked for the baseline.
    pub inflation_alpha: f64,
}

impl Default for CalibrationCriteria {
    fn default() -> Self {
        Self {
            min_in_band_fraction: 0.9,
            min_ks_p: 0.001,
            inflation_alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_tests: usize,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub in_band_fraction: f64,
    pub inflation_alpha: f64,
    pub fpr_at_inflation_alpha: f64,
    pub ci_high_at_inflation_alpha: f64,
    pub inflated: bool,
    pub pass_in_band: bool,
    pub pass_ks: bool,
    pub calibrated: bool,
}

impl MethodSummary {
    pub fn new(report: &CalibrationReport, criteria: &CalibrationCriteria) -> Result<Self> {
        let a = criteria.inflation_alpha;
        let in_band = report.in_band_fraction();
        let pass_in_band = in_band >= criteria.min_in_band_fraction;
        let pass_ks = report.ks_p > criteria.min_ks_p;
        Ok(Self {
            method: report.method,
            n_tests: report.n_tests,
            ks_statistic: report.ks_statistic,
            ks_p: report.ks_p,
            in_band_fraction: in_band,
            inflation_alpha: a,
            fpr_at_inflation_alpha: report.fpr_at(a),
            ci_high_at_inflation_alpha: report.band_at(a)?.1,
            inflated: report.inflated_at(a)?,
            pass_in_band,
            pass_ks,
            calibrated: pass_in_band && pass_ks,
        })
    }
}

/// Structured summary written next to the curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub level: f64,
    pub alpha_points: usize,
    pub criteria: CalibrationCriteria,
    pub n_datasets: usize,
    /// True when every LMM flag passes; drives the exit code.
    pub lmm_pass: bool,
    pub methods: Vec<MethodSummary>,
}

impl CalibrationSummary {
    pub fn new(
        reports: &[&CalibrationReport],
        criteria: &CalibrationCriteria,
        n_datasets: usize,
    ) -> Result<Self> {
        let first = reports.first().ok_or(Error::EmptyInput)?;
        let methods = reports
            .iter()
            .map(|r| MethodSummary::new(r, criteria))
            .collect::<Result<Vec<_>>>()?;
        let lmm_pass = methods
            .iter()
            .filter(|m| m.method == Method::Lmm)
            .all(|m| m.calibrated)
            && methods.iter().any(|m| m.method == Method::Lmm);
        Ok(Self {
            level: first.level,
            alpha_points: first.alpha_grid.len(),
            criteria: *criteria,
            n_datasets,
            lmm_pass,
            methods,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Curve table `alpha,fpr_lmm,fpr_univariate,ci_low,ci_high`. The band is
/// the LMM report's; a missing method is written as `NaN`.
pub fn format_table(lmm: Option<&CalibrationReport>, univariate: Option<&CalibrationReport>) -> Result<String> {
    let base = lmm.or(univariate).ok_or(Error::EmptyInput)?;
    let mut out = String::from("alpha,fpr_lmm,fpr_univariate,ci_low,ci_high\n");
    let col = |r: Option<&CalibrationReport>, i: usize| r.map_or(f64::NAN, |r| r.fpr[i]);
    for (i, a) in base.alpha_grid.iter().enumerate() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            a,
            col(lmm, i),
            col(univariate, i),
            base.ci_low[i],
            base.ci_high[i]
        )
        .unwrap();
    }
    Ok(out)
}

//! C ABI over the `klmm` library.
//!
//! Every function returns a [`KlmmStatus`] and writes results through out
//! pointers. On failure the thread-local message from
//! [`klmm_last_error_message`] describes what went wrong. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use klmm::calibrate::{calibrated_band, ks_uniformity};
use klmm::genotypes::{build_rrm, GenotypeMatrix};
use klmm::lmm::{
    chi2_upper_tail, f_upper_tail, scan_lmm, scan_univariate_with, write_association_table, AssociationResult,
    DeltaGrid, Exclusion, LmmFit, Method, ScanOptions, Status, UnivariateTest,
};
use klmm::simulate::{generate_cohort, read_cohort, write_cohort, SimConfig, SimulatedCohort};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    MissingTruth = 7,
    Panic = 8,
}

pub const KLMM_EXCLUSION_WOODBURY: u32 = 0;
pub const KLMM_EXCLUSION_EXACT: u32 = 1;
pub const KLMM_EXCLUSION_NONE: u32 = 2;

pub const KLMM_UNIVARIATE_LRT: u32 = 0;
pub const KLMM_UNIVARIATE_F: u32 = 1;

pub const KLMM_METHOD_LMM: u32 = 0;
pub const KLMM_METHOD_UNIVARIATE: u32 = 1;

pub const KLMM_TEST_OK: u32 = 0;
pub const KLMM_TEST_SINGULAR_DOWNDATE: u32 = 1;
pub const KLMM_TEST_SINGULAR_DESIGN: u32 = 2;

/// Simulation parameters; fill with [`klmm_sim_params_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KlmmSimParams {
    pub n_individuals: usize,
    pub n_snps: usize,
    pub family_fraction: f64,
    pub offspring_per_pair: usize,
    pub maf_low: f64,
    pub maf_high: f64,
    pub n_causal: usize,
    pub heritability: f64,
    pub hidden_enabled: bool,
    pub n_hidden: usize,
    pub hidden_strength: f64,
    pub seed: u64,
}

/// LMM scan options; fill with [`klmm_scan_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KlmmScanOptions {
    /// One of the `KLMM_EXCLUSION_*` values.
    pub exclusion: u32,
    pub refit_per_snp: bool,
    pub grid_points: usize,
    /// Fixed variance ratio; NaN fits it by REML.
    pub delta: f64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KlmmAssociation {
    pub snp_index: usize,
    pub beta_hat: f64,
    pub statistic: f64,
    pub p_value: f64,
    /// One of the `KLMM_METHOD_*` values.
    pub method: u32,
    /// One of the `KLMM_TEST_*` values.
    pub status: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KlmmFit {
    pub delta: f64,
    pub sigma_g2: f64,
    pub sigma_e2: f64,
    pub intercept: f64,
    pub reml_loglik: f64,
    pub heritability: f64,
}

/// A cohort with standardized genotypes and a phenotype.
pub struct KlmmCohort {
    genotypes: GenotypeMatrix,
    phenotype: Vec<f64>,
    causal: Option<Vec<usize>>,
    simulated: Option<Box<SimulatedCohort>>,
}

/// Per-SNP results of one scan.
pub struct KlmmScan {
    results: Vec<AssociationResult>,
    fit: Option<LmmFit>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: KlmmStatus,
    message: String,
}

impl Failure {
    fn new(status: KlmmStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(KlmmStatus::NullPointer, format!("{what} is null"))
    }

    fn arg(message: impl Into<String>) -> Self {
        Self::new(KlmmStatus::InvalidArgument, message)
    }
}

impl From<klmm::Error> for Failure {
    fn from(e: klmm::Error) -> Self {
        use klmm::Error as E;
        let status = match &e {
            E::Domain(_) | E::Config(_) | E::AlreadyStandardized | E::NotStandardized | E::InvalidAlleleCount { .. } => {
                KlmmStatus::InvalidArgument
            }
            E::Dimension(_) | E::SnpOutOfRange { .. } | E::EmptyInput | E::EmptyKernel => KlmmStatus::Dimension,
            E::MonomorphicColumn(_)
            | E::NegativeEigenvalue(_)
            | E::EigenFailure
            | E::SingularDowndate(_)
            | E::SingularDesign => KlmmStatus::Numerical,
            E::Io { .. } => KlmmStatus::Io,
            E::Format { .. } => KlmmStatus::Format,
            E::MissingTruth(_) => KlmmStatus::MissingTruth,
        };
        Self::new(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KlmmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KlmmStatus::Ok,
        Ok(Err(fail)) => {
            set_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            KlmmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::arg("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn copy_into<T: Copy>(src: &[T], buf: *mut T, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    if len != src.len() {
        return Err(Failure::new(
            KlmmStatus::Dimension,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(())
}

fn exclusion_from(code: u32) -> Result<Exclusion, Failure> {
    match code {
        KLMM_EXCLUSION_WOODBURY => Ok(Exclusion::Woodbury),
        KLMM_EXCLUSION_EXACT => Ok(Exclusion::Exact),
        KLMM_EXCLUSION_NONE => Ok(Exclusion::None),
        _ => Err(Failure::arg(format!("unknown exclusion code {code}"))),
    }
}

fn association_to_c(r: &AssociationResult) -> KlmmAssociation {
    KlmmAssociation {
        snp_index: r.snp_index,
        beta_hat: r.beta_hat,
        statistic: r.statistic,
        p_value: r.p_value,
        method: match r.method {
            Method::Lmm => KLMM_METHOD_LMM,
            Method::Univariate => KLMM_METHOD_UNIVARIATE,
        },
        status: match r.status {
            Status::Ok => KLMM_TEST_OK,
            Status::SingularDowndate => KLMM_TEST_SINGULAR_DOWNDATE,
            Status::SingularDesign => KLMM_TEST_SINGULAR_DESIGN,
        },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn klmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next library call on the same thread.
#[no_mangle]
pub extern "C" fn klmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_sim_params_default(out: *mut KlmmSimParams) -> KlmmStatus {
    guard(|| {
        let d = SimConfig::default();
        write_out(
            out,
            KlmmSimParams {
                n_individuals: d.n_individuals,
                n_snps: d.n_snps,
                family_fraction: d.family_fraction,
                offspring_per_pair: d.offspring_per_pair,
                maf_low: d.maf_range[0],
                maf_high: d.maf_range[1],
                n_causal: d.n_causal,
                heritability: d.heritability,
                hidden_enabled: d.hidden_enabled,
                n_hidden: d.n_hidden,
                hidden_strength: d.hidden_strength,
                seed: d.seed,
            },
            "out",
        )
    })
}

/// Simulates a cohort.
///
/// # Safety
/// `params` must be null or point to a valid struct; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_simulate(params: *const KlmmSimParams, out: *mut *mut KlmmCohort) -> KlmmStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let cfg = SimConfig {
            n_individuals: p.n_individuals,
            n_snps: p.n_snps,
            family_fraction: p.family_fraction,
            offspring_per_pair: p.offspring_per_pair,
            maf_range: [p.maf_low, p.maf_high],
            n_causal: p.n_causal,
            heritability: p.heritability,
            hidden_enabled: p.hidden_enabled,
            n_hidden: p.n_hidden,
            hidden_strength: p.hidden_strength,
            seed: p.seed,
        };
        let sim = generate_cohort(&cfg)?;
        let handle = KlmmCohort {
            genotypes: sim.genotypes.clone(),
            phenotype: sim.phenotype.clone(),
            causal: Some(sim.causal_indices.clone()),
            simulated: Some(Box::new(sim)),
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

/// Loads a dataset directory written by `klmm simulate` or
/// [`klmm_cohort_save`].
///
/// # Safety
/// `dir` must be null or a NUL-terminated string; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_load(dir: *const c_char, out: *mut *mut KlmmCohort) -> KlmmStatus {
    guard(|| {
        let dir = path_arg(dir)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let stored = read_cohort(&dir)?;
        let handle = KlmmCohort {
            genotypes: stored.genotypes.standardize()?,
            phenotype: stored.phenotype,
            causal: stored.metadata.causal_indices,
            simulated: None,
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

/// Writes a simulated cohort to `dir`. Loaded cohorts cannot be saved.
///
/// # Safety
/// `cohort` must be null or a live handle; `dir` must be null or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_save(cohort: *const KlmmCohort, dir: *const c_char) -> KlmmStatus {
    guard(|| {
        let c = deref(cohort, "cohort")?;
        let dir = path_arg(dir)?;
        let sim = c
            .simulated
            .as_ref()
            .ok_or_else(|| Failure::arg("only simulated cohorts can be saved"))?;
        std::fs::create_dir_all(&dir).map_err(|e| Failure::new(KlmmStatus::Io, format!("{}: {e}", dir.display())))?;
        write_cohort(sim, &dir)?;
        Ok(())
    })
}

/// # Safety
/// `cohort` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_free(cohort: *mut KlmmCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// # Safety
/// `cohort` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_n_individuals(cohort: *const KlmmCohort, out: *mut usize) -> KlmmStatus {
    guard(|| write_out(out, deref(cohort, "cohort")?.genotypes.n_individuals(), "out"))
}

/// # Safety
/// `cohort` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_n_snps(cohort: *const KlmmCohort, out: *mut usize) -> KlmmStatus {
    guard(|| write_out(out, deref(cohort, "cohort")?.genotypes.n_snps(), "out"))
}

/// Copies the phenotype; `len` must equal the number of individuals.
///
/// # Safety
/// `cohort` must be null or a live handle; `buf` must be null or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_phenotype(cohort: *const KlmmCohort, buf: *mut f64, len: usize) -> KlmmStatus {
    guard(|| copy_into(&deref(cohort, "cohort")?.phenotype, buf, len))
}

/// Number of causal SNPs; fails with `MissingTruth` when unknown.
///
/// # Safety
/// `cohort` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_n_causal(cohort: *const KlmmCohort, out: *mut usize) -> KlmmStatus {
    guard(|| {
        let c = deref(cohort, "cohort")?;
        let causal = c
            .causal
            .as_ref()
            .ok_or_else(|| Failure::new(KlmmStatus::MissingTruth, "cohort has no causal ground truth"))?;
        write_out(out, causal.len(), "out")
    })
}

/// Copies the sorted causal SNP indices; `len` must equal the causal count.
///
/// # Safety
/// `cohort` must be null or a live handle; `buf` must be null or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_cohort_causal_indices(cohort: *const KlmmCohort, buf: *mut usize, len: usize) -> KlmmStatus {
    guard(|| {
        let c = deref(cohort, "cohort")?;
        let causal = c
            .causal
            .as_ref()
            .ok_or_else(|| Failure::new(KlmmStatus::MissingTruth, "cohort has no causal ground truth"))?;
        copy_into(causal, buf, len)
    })
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_options_default(out: *mut KlmmScanOptions) -> KlmmStatus {
    guard(|| {
        write_out(
            out,
            KlmmScanOptions {
                exclusion: KLMM_EXCLUSION_WOODBURY,
                refit_per_snp: false,
                grid_points: DeltaGrid::DEFAULT_POINTS,
                delta: f64::NAN,
                threads: 0,
            },
            "out",
        )
    })
}

/// Mixed-model scan over every SNP of the cohort. A null `options` uses the
/// defaults.
///
/// # Safety
/// `cohort` must be null or a live handle; `options` must be null or valid;
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_lmm(
    cohort: *const KlmmCohort,
    options: *const KlmmScanOptions,
    out: *mut *mut KlmmScan,
) -> KlmmStatus {
    guard(|| {
        let c = deref(cohort, "cohort")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let mut opts = ScanOptions::default();
        if let Some(o) = options.as_ref() {
            opts.exclusion = exclusion_from(o.exclusion)?;
            opts.refit_per_snp = o.refit_per_snp;
            if o.grid_points != DeltaGrid::DEFAULT_POINTS {
                opts.grid = DeltaGrid::with_points(o.grid_points)?;
            }
            opts.delta = (!o.delta.is_nan()).then_some(o.delta);
            opts.threads = (o.threads > 0).then_some(o.threads);
        }
        let kernel = build_rrm(&c.genotypes, &[])?;
        let scan = scan_lmm(&c.genotypes, &c.phenotype, &kernel, &opts)?;
        let handle = KlmmScan {
            results: scan.results,
            fit: Some(scan.fit),
        };
        out.write(Box::into_raw(Box::new(handle)));
        Ok(())
    })
}

/// Univariate baseline scan; `test` is one of the `KLMM_UNIVARIATE_*`
/// values.
///
/// # Safety
/// `cohort` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_univariate(cohort: *const KlmmCohort, test: u32, out: *mut *mut KlmmScan) -> KlmmStatus {
    guard(|| {
        let c = deref(cohort, "cohort")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let test = match test {
            KLMM_UNIVARIATE_LRT => UnivariateTest::Lrt,
            KLMM_UNIVARIATE_F => UnivariateTest::F,
            _ => return Err(Failure::arg(format!("unknown univariate test code {test}"))),
        };
        let results = scan_univariate_with(&c.genotypes, &c.phenotype, test)?;
        out.write(Box::into_raw(Box::new(KlmmScan { results, fit: None })));
        Ok(())
    })
}

/// # Safety
/// `scan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_free(scan: *mut KlmmScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// # Safety
/// `scan` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_len(scan: *const KlmmScan, out: *mut usize) -> KlmmStatus {
    guard(|| write_out(out, deref(scan, "scan")?.results.len(), "out"))
}

/// Result row `i`, in SNP order.
///
/// # Safety
/// `scan` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_get(scan: *const KlmmScan, i: usize, out: *mut KlmmAssociation) -> KlmmStatus {
    guard(|| {
        let s = deref(scan, "scan")?;
        let r = s.results.get(i).ok_or_else(|| {
            Failure::new(
                KlmmStatus::Dimension,
                format!("row {i} out of range for {} rows", s.results.len()),
            )
        })?;
        write_out(out, association_to_c(r), "out")
    })
}

/// Copies all P values in SNP order (NaN for failed tests).
///
/// # Safety
/// `scan` must be null or a live handle; `buf` must be null or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_pvalues(scan: *const KlmmScan, buf: *mut f64, len: usize) -> KlmmStatus {
    guard(|| {
        let p: Vec<f64> = deref(scan, "scan")?.results.iter().map(|r| r.p_value).collect();
        copy_into(&p, buf, len)
    })
}

/// Variance-component fit of an LMM scan.
///
/// # Safety
/// `scan` must be null or a live handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_fit(scan: *const KlmmScan, out: *mut KlmmFit) -> KlmmStatus {
    guard(|| {
        let fit = deref(scan, "scan")?
            .fit
            .as_ref()
            .ok_or_else(|| Failure::arg("univariate scans have no variance fit"))?;
        write_out(
            out,
            KlmmFit {
                delta: fit.delta,
                sigma_g2: fit.sigma_g2,
                sigma_e2: fit.sigma_e2,
                intercept: fit.fixed_effects.first().copied().unwrap_or(f64::NAN),
                reml_loglik: fit.reml_loglik,
                heritability: fit.heritability(),
            },
            "out",
        )
    })
}

/// Writes the association table as CSV.
///
/// # Safety
/// `scan` must be null or a live handle; `path` must be null or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn klmm_scan_write(scan: *const KlmmScan, path: *const c_char) -> KlmmStatus {
    guard(|| {
        let s = deref(scan, "scan")?;
        let path = path_arg(path)?;
        write_association_table(&s.results, &path)?;
        Ok(())
    })
}

/// Upper tail of `F(d1, d2)` at `x`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_f_upper_tail(x: f64, d1: u64, d2: u64, out: *mut f64) -> KlmmStatus {
    guard(|| write_out(out, f_upper_tail(x, d1, d2)?, "out"))
}

/// Upper tail of the chi-squared distribution with `k` degrees of freedom.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_chi2_upper_tail(x: f64, k: u64, out: *mut f64) -> KlmmStatus {
    guard(|| write_out(out, chi2_upper_tail(x, k)?, "out"))
}

/// One-sample Kolmogorov-Smirnov test of `n` P values against U(0, 1).
///
/// # Safety
/// `pvals` must be null or valid for `n` reads; `d` and `p` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_ks_uniformity(pvals: *const f64, n: usize, d: *mut f64, p: *mut f64) -> KlmmStatus {
    guard(|| {
        if pvals.is_null() {
            return Err(Failure::null("pvals"));
        }
        if d.is_null() || p.is_null() {
            return Err(Failure::null("out"));
        }
        let (stat, pv) = ks_uniformity(std::slice::from_raw_parts(pvals, n))?;
        d.write(stat);
        p.write(pv);
        Ok(())
    })
}

/// Clopper-Pearson band for the false-positive rate at `alpha` over
/// `n_tests` tests.
///
/// # Safety
/// `low` and `high` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn klmm_calibrated_band(
    alpha: f64,
    n_tests: usize,
    level: f64,
    low: *mut f64,
    high: *mut f64,
) -> KlmmStatus {
    guard(|| {
        if low.is_null() || high.is_null() {
            return Err(Failure::null("out"));
        }
        let (lo, hi) = calibrated_band(alpha, n_tests, level)?;
        low.write(lo);
        high.write(hi);
        Ok(())
    })
}

#ifndef KLMM_H
#define KLMM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define KLMM_EXCLUSION_WOODBURY 0

#define KLMM_EXCLUSION_EXACT 1

#define KLMM_EXCLUSION_NONE 2

#define KLMM_UNIVARIATE_LRT 0

#define KLMM_UNIVARIATE_F 1

#define KLMM_METHOD_LMM 0

#define KLMM_METHOD_UNIVARIATE 1

#define KLMM_TEST_OK 0

#define KLMM_TEST_SINGULAR_DOWNDATE 1

#define KLMM_TEST_SINGULAR_DESIGN 2

typedef enum KlmmStatus {
  KLMM_STATUS_OK = 0,
  KLMM_STATUS_NULL_POINTER = 1,
  KLMM_STATUS_INVALID_ARGUMENT = 2,
  KLMM_STATUS_DIMENSION = 3,
  KLMM_STATUS_NUMERICAL = 4,
  KLMM_STATUS_IO = 5,
  KLMM_STATUS_FORMAT = 6,
  KLMM_STATUS_MISSING_TRUTH = 7,
  KLMM_STATUS_PANIC = 8,
} KlmmStatus;

/**
 * A cohort with standardized genotypes and a phenotype.
 */
typedef struct KlmmCohort KlmmCohort;

/**
 * Per-SNP results of one scan.
 */
typedef struct KlmmScan KlmmScan;

/**
 * Simulation parameters; fill with [`klmm_sim_params_default`] first.
 */
typedef struct KlmmSimParams {
  size_t n_individuals;
  size_t n_snps;
  double family_fraction;
  size_t offspring_per_pair;
  double maf_low;
  double maf_high;
  size_t n_causal;
  double heritability;
  bool hidden_enabled;
  size_t n_hidden;
  double hidden_strength;
  uint64_t seed;
} KlmmSimParams;

/**
 * LMM scan options; fill with [`klmm_scan_options_default`] first.
 */
typedef struct KlmmScanOptions {
  /**
   * One of the `KLMM_EXCLUSION_*` values.
   */
  uint32_t exclusion;
  bool refit_per_snp;
  size_t grid_points;
  /**
   * Fixed variance ratio; NaN fits it by REML.
   */
  double delta;
  /**
   * Worker threads; 0 uses the global pool.
   */
  size_t threads;
} KlmmScanOptions;

typedef struct KlmmAssociation {
  size_t snp_index;
  double beta_hat;
  double statistic;
  double p_value;
  /**
   * One of the `KLMM_METHOD_*` values.
   */
  uint32_t method;
  /**
   * One of the `KLMM_TEST_*` values.
   */
  uint32_t status;
} KlmmAssociation;

typedef struct KlmmFit {
  double delta;
  double sigma_g2;
  double sigma_e2;
  double intercept;
  double reml_loglik;
  double heritability;
} KlmmFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *klmm_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next library call on the same thread.
 */
const char *klmm_last_error_message(void);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum KlmmStatus klmm_sim_params_default(struct KlmmSimParams *out);

/**
 * Simulates a cohort.
 *
 * # Safety
 * `params` must be null or point to a valid struct; `out` must be null or
 * valid for writes.
 */
enum KlmmStatus klmm_cohort_simulate(const struct KlmmSimParams *params, struct KlmmCohort **out);

/**
 * Loads a dataset directory written by `klmm simulate` or
 * [`klmm_cohort_save`].
 *
 * # Safety
 * `dir` must be null or a NUL-terminated string; `out` must be null or
 * valid for writes.
 */
enum KlmmStatus klmm_cohort_load(const char *dir, struct KlmmCohort **out);

/**
 * Writes a simulated cohort to `dir`. Loaded cohorts cannot be saved.
 *
 * # Safety
 * `cohort` must be null or a live handle; `dir` must be null or a
 * NUL-terminated string.
 */
enum KlmmStatus klmm_cohort_save(const struct KlmmCohort *cohort, const char *dir);

/**
 * # Safety
 * `cohort` must be null or a handle not yet freed.
 */
void klmm_cohort_free(struct KlmmCohort *cohort);

/**
 * # Safety
 * `cohort` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_cohort_n_individuals(const struct KlmmCohort *cohort, size_t *out);

/**
 * # Safety
 * `cohort` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_cohort_n_snps(const struct KlmmCohort *cohort, size_t *out);

/**
 * Copies the phenotype; `len` must equal the number of individuals.
 *
 * # Safety
 * `cohort` must be null or a live handle; `buf` must be null or valid for
 * `len` writes.
 */
enum KlmmStatus klmm_cohort_phenotype(const struct KlmmCohort *cohort, double *buf, size_t len);

/**
 * Number of causal SNPs; fails with `MissingTruth` when unknown.
 *
 * # Safety
 * `cohort` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_cohort_n_causal(const struct KlmmCohort *cohort, size_t *out);

/**
 * Copies the sorted causal SNP indices; `len` must equal the causal count.
 *
 * # Safety
 * `cohort` must be null or a live handle; `buf` must be null or valid for
 * `len` writes.
 */
enum KlmmStatus klmm_cohort_causal_indices(const struct KlmmCohort *cohort,
                                           size_t *buf,
                                           size_t len);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum KlmmStatus klmm_scan_options_default(struct KlmmScanOptions *out);

/**
 * Mixed-model scan over every SNP of the cohort. A null `options` uses the
 * defaults.
 *
 * # Safety
 * `cohort` must be null or a live handle; `options` must be null or valid;
 * `out` must be null or valid for writes.
 */
enum KlmmStatus klmm_scan_lmm(const struct KlmmCohort *cohort,
                              const struct KlmmScanOptions *options,
                              struct KlmmScan **out);

/**
 * Univariate baseline scan; `test` is one of the `KLMM_UNIVARIATE_*`
 * values.
 *
 * # Safety
 * `cohort` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_scan_univariate(const struct KlmmCohort *cohort,
                                     uint32_t test,
                                     struct KlmmScan **out);

/**
 * # Safety
 * `scan` must be null or a handle not yet freed.
 */
void klmm_scan_free(struct KlmmScan *scan);

/**
 * # Safety
 * `scan` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_scan_len(const struct KlmmScan *scan, size_t *out);

/**
 * Result row `i`, in SNP order.
 *
 * # Safety
 * `scan` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_scan_get(const struct KlmmScan *scan, size_t i, struct KlmmAssociation *out);

/**
 * Copies all P values in SNP order (NaN for failed tests).
 *
 * # Safety
 * `scan` must be null or a live handle; `buf` must be null or valid for
 * `len` writes.
 */
enum KlmmStatus klmm_scan_pvalues(const struct KlmmScan *scan, double *buf, size_t len);

/**
 * Variance-component fit of an LMM scan.
 *
 * # Safety
 * `scan` must be null or a live handle; `out` must be null or valid for
 * writes.
 */
enum KlmmStatus klmm_scan_fit(const struct KlmmScan *scan, struct KlmmFit *out);

/**
 * Writes the association table as CSV.
 *
 * # Safety
 * `scan` must be null or a live handle; `path` must be null or a
 * NUL-terminated string.
 */
enum KlmmStatus klmm_scan_write(const struct KlmmScan *scan, const char *path);

/**
 * Upper tail of `F(d1, d2)` at `x`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum KlmmStatus klmm_f_upper_tail(double x, uint64_t d1, uint64_t d2, double *out);

/**
 * Upper tail of the chi-squared distribution with `k` degrees of freedom.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum KlmmStatus klmm_chi2_upper_tail(double x, uint64_t k, double *out);

/**
 * One-sample Kolmogorov-Smirnov test of `n` P values against U(0, 1).
 *
 * # Safety
 * `pvals` must be null or valid for `n` reads; `d` and `p` must be null or
 * valid for writes.
 */
enum KlmmStatus klmm_ks_uniformity(const double *pvals, size_t n, double *d, double *p);

/**
 * Clopper-Pearson band for the false-positive rate at `alpha` over
 * `n_tests` tests.
 *
 * # Safety
 * `low` and `high` must be null or valid for writes.
 */
enum KlmmStatus klmm_calibrated_band(double alpha,
                                     size_t n_tests,
                                     double level,
                                     double *low,
                                     double *high);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KLMM_H */

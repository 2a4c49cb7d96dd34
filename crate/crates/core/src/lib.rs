//! Linear mixed model association testing for genome-wide association
//! studies, with a family-structured cohort simulator and a calibration
//! harness for P values among non-causal SNPs.
//!
//! The pipeline is:
//!
//! 1. [`simulate::generate_cohort`] builds a cohort (or read one from disk);
//! 2. [`genotypes::build_rrm`] factorizes the realized relationship matrix;
//! 3. [`lmm::scan_lmm`] and [`lmm::scan_univariate`] test each SNP;
//! 4. [`calibrate`] pools non-causal P values into false-positive-rate curves.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod genotypes;
pub mod lmm;
pub mod simulate;

pub use error::{Error, Result};

//! Genotype storage, standardization and the realized relationship kernel.
//!
//! Raw allele counts are kept as `u8` in row-major order (one row per
//! individual). Standardization promotes them to a column-major `f64` matrix
//! with every column at mean 0 and population variance 1.

mod io;
mod kernel;

pub use io::{decode_binary, encode_binary, read_binary, read_text, write_binary, write_text, MAGIC, VERSION};
pub use kernel::{build_rrm, dense_kernel, SpectralKernel, DOWNDATE_TOL, EIGEN_NEG_TOL};

use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Standardized {
    values: Mat<f64>,
    col_means: Vec<f64>,
    col_stds: Vec<f64>,
}

/// N x M allele-count matrix, optionally carrying its standardized values.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    n_individuals: usize,
    n_snps: usize,
    counts: Vec<u8>,
    standardized: Option<Standardized>,
}

impl PartialEq for GenotypeMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_individuals == other.n_individuals
            && self.n_snps == other.n_snps
            && self.counts == other.counts
    }
}

impl GenotypeMatrix {
    /// Builds a matrix from row-major allele counts.
    pub fn from_counts(n_individuals: usize, n_snps: usize, counts: Vec<u8>) -> Result<Self> {
        if counts.len() != n_individuals * n_snps {
            return Err(Error::Dimension(format!(
                "{} counts for a {}x{} matrix",
                counts.len(),
                n_individuals,
                n_snps
            )));
        }
        if let Some(pos) = counts.iter().position(|&c| c > 2) {
            return Err(Error::InvalidAlleleCount {
                row: pos / n_snps.max(1),
                col: pos % n_snps.max(1),
                value: counts[pos],
            });
        }
        Ok(Self {
            n_individuals,
            n_snps,
            counts,
            standardized: None,
        })
    }

    /// Builds a matrix from SNP-major columns (each column has one entry per individual).
    pub fn from_columns(n_individuals: usize, columns: &[Vec<u8>]) -> Result<Self> {
        let n_snps = columns.len();
        let mut counts = vec![0u8; n_individuals * n_snps];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_individuals {
                return Err(Error::Dimension(format!(
                    "column {} has {} entries, expected {}",
                    j,
                    col.len(),
                    n_individuals
                )));
            }
            for (i, &c) in col.iter().enumerate() {
                counts[i * n_snps + j] = c;
            }
        }
        Self::from_counts(n_individuals, n_snps, counts)
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_snps(&self) -> usize {
        self.n_snps
    }

    pub fn count(&self, row: usize, col: usize) -> u8 {
        self.counts[row * self.n_snps + col]
    }

    /// Raw row-major allele counts.
    pub fn counts(&self) -> &[u8] {
        &self.counts
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.counts[i * self.n_snps..(i + 1) * self.n_snps]
    }

    pub fn count_column(&self, j: usize) -> Vec<u8> {
        (0..self.n_individuals).map(|i| self.count(i, j)).collect()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized.is_some()
    }

    /// Standardized N x M values.
    pub fn values(&self) -> Result<&Mat<f64>> {
        self.standardized
            .as_ref()
            .map(|s| &s.values)
            .ok_or(Error::NotStandardized)
    }

    /// Standardized column `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> Result<&[f64]> {
        if j >= self.n_snps {
            return Err(Error::SnpOutOfRange {
                index: j,
                n_snps: self.n_snps,
            });
        }
        let values = self.values()?;
        Ok(values
            .col(j)
            .try_as_col_major()
            .expect("faer columns are contiguous")
            .as_slice())
    }

    pub fn col_means(&self) -> Option<&[f64]> {
        self.standardized.as_ref().map(|s| s.col_means.as_slice())
    }

    pub fn col_stds(&self) -> Option<&[f64]> {
        self.standardized.as_ref().map(|s| s.col_stds.as_slice())
    }

    /// Reverses standardization: `mean + std * z`, which reproduces the counts.
    pub fn destandardize_column(&self, j: usize) -> Result<Vec<f64>> {
        let s = self.standardized.as_ref().ok_or(Error::NotStandardized)?;
        let (mean, sd) = (s.col_means[j], s.col_stds[j]);
        Ok(self.column(j)?.iter().map(|z| mean + sd * z).collect())
    }

    /// Centers each column and scales it to unit population (1/N) variance.
    pub fn standardize(&self) -> Result<GenotypeMatrix> {
        if self.is_standardized() {
            return Err(Error::AlreadyStandardized);
        }
        let n = self.n_individuals;
        let m = self.n_snps;
        let mut values = Mat::<f64>::zeros(n, m);
        let mut col_means = Vec::with_capacity(m);
        let mut col_stds = Vec::with_capacity(m);
        let mut col = vec![0.0; n];
        for j in 0..m {
            for (i, c) in col.iter_mut().enumerate() {
                *c = self.count(i, j) as f64;
            }
            let (mean, sd) = standardize_column(&mut col).ok_or(Error::MonomorphicColumn(j))?;
            for (i, &z) in col.iter().enumerate() {
                values[(i, j)] = z;
            }
            col_means.push(mean);
            col_stds.push(sd);
        }
        Ok(GenotypeMatrix {
            n_individuals: n,
            n_snps: m,
            counts: self.counts.clone(),
            standardized: Some(Standardized {
                values,
                col_means,
                col_stds,
            }),
        })
    }

    /// Row subset in the given order; the result is unstandardized.
    pub fn select_rows(&self, rows: &[usize]) -> GenotypeMatrix {
        let mut counts = Vec::with_capacity(rows.len() * self.n_snps);
        for &r in rows {
            counts.extend_from_slice(self.row(r));
        }
        GenotypeMatrix {
            n_individuals: rows.len(),
            n_snps: self.n_snps,
            counts,
            standardized: None,
        }
    }
}

/// Standardizes a column in place, returning its original `(mean, std)`.
/// Returns `None` for a zero-variance column.
pub fn standardize_column(col: &mut [f64]) -> Option<(f64, f64)> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(var > 0.0) || var.sqrt() <= 1e-12 * (1.0 + mean.abs()) {
        return None;
    }
    let sd = var.sqrt();
    for x in col.iter_mut() {
        *x = (*x - mean) / sd;
    }
    Some((mean, sd))
}

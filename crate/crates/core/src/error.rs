use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("SNP column {0} has zero variance")]
    MonomorphicColumn(usize),

    #[error("genotype matrix is already standardized")]
    AlreadyStandardized,

    #[error("genotype matrix must be standardized first")]
    NotStandardized,

    #[error("invalid allele count {value} at individual {row}, SNP {col}")]
    InvalidAlleleCount { row: usize, col: usize, value: u8 },

    #[error("kernel has no SNP columns left after exclusion")]
    EmptyKernel,

    #[error("SNP index {index} out of range for {n_snps} SNPs")]
    SnpOutOfRange { index: usize, n_snps: usize },

    #[error("kernel eigenvalue {0:e} is below the negative tolerance")]
    NegativeEigenvalue(f64),

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("leave-one-out downdate is near singular (1 - c x'A^-1 x = {0:e})")]
    SingularDowndate(f64),

    #[error("fixed-effect normal equations are numerically singular")]
    SingularDesign,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metadata {0} has no causal ground truth")]
    MissingTruth(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

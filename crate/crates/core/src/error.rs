use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point {point:?} is within {step} of the domain boundary in dimension {dim}")]
    Boundary {
        point: Vec<f64>,
        dim: usize,
        step: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("no observations inside the data bounds ({dropped} rows dropped)")]
    EmptyData { dropped: usize },

    #[error("optimizer did not converge after {iterations} iterations (last iterate alpha={alpha}, beta={beta}, |grad|={grad_norm:e})")]
    Optimization {
        iterations: usize,
        alpha: f64,
        beta: f64,
        grad_norm: f64,
    },

    #[error("prior under-resolves the data: {empty_mass:.4} of the data mass falls in cells with no prior sample (threshold {threshold}); increase the number of prior samples")]
    UnderResolvedPrior { empty_mass: f64, threshold: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate prior: estimated acceptance {acceptance:e} of the truncated normal proposal is below 1e-6")]
    DegeneratePrior { acceptance: f64 },

    #[error("infeasible prior: output symbol {symbol} carries data mass but its contour has zero prior mass")]
    InfeasiblePrior { symbol: usize },

    #[error("singular contour at q={0}: pushforward density vanishes")]
    SingularContour(f64),

    #[error("unsupported contour at q={0}: density integrates to zero on the contour")]
    UnsupportedContour(f64),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Boundary { .. } => "boundary",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyData { .. } => "empty_data",
            Error::Optimization { .. } => "optimization",
            Error::UnderResolvedPrior { .. } => "under_resolved_prior",
            Error::DegenerateData(_) => "degenerate_data",
            Error::DegeneratePrior { .. } => "degenerate_prior",
            Error::InfeasiblePrior { .. } => "infeasible_prior",
            Error::SingularContour(_) => "singular_contour",
            Error::UnsupportedContour(_) => "unsupported_contour",
            Error::Numeric(_) => "numeric",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Config(_) => "config",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::market::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid market: {0}")]
    InvalidMarket(ValidationReport),

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid uncertainty model: {0}")]
    InvalidModel(String),

    #[error("buyer index {index} out of range for a market with {n} buyers")]
    BuyerIndex { index: usize, n: usize },

    /// A logarithm or geometric mean received a nonpositive argument.
    #[error("nonpositive utility {value:e} for buyer {buyer}")]
    Domain { buyer: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exact regret requires b_i <= min_j p_j or m <= {max_goods} (m = {m}); use sampled mode")]
    NotEnumerable { m: usize, max_goods: usize },

    #[error("solution is missing worst-case valuation witnesses")]
    MissingWitnesses,

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

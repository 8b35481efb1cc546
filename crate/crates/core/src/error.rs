use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which half of a layer a marginal belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// After the affine map, before the activation.
    Pre,
    /// After the ReLU.
    Post,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Pre => f.write_str("pre"),
            Phase::Post => f.write_str("post"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("layer {layer} expects {found} inputs but the previous layer produces {expected}")]
    DimensionChain {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in layer {layer} ({phase}) component {component}")]
    NumericFailure {
        layer: usize,
        component: usize,
        phase: Phase,
    },

    #[error("constraint vector c is all zeros")]
    DegenerateConstraint,

    #[error("moment of order {0} is not supported (orders 1 and 2 only)")]
    UnsupportedOrder(u32),

    #[error("quantile bracket did not close after {0} expansions")]
    UnboundedQuantile(usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{field} = {value} is out of range ({expected})")]
    Range {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures caused by the numerics rather than by the input files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure { .. } | Error::UnboundedQuantile(_)
        )
    }
}

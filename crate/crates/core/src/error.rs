use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented invariant. `field` names the offending
    /// parameter (a dotted path for config documents).
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("unknown key `{path}`")]
    UnknownKey { path: String },

    #[error("unit-suffix mismatch at `{path}`: expected `{expected}`")]
    UnitSuffix { path: String, expected: String },

    #[error("matrix is not positive definite (pivot failed at node {node})")]
    NotPositiveDefinite { node: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible plan: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 for validation/input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite { .. } | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

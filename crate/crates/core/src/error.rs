use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented invariant. `field` names the offending
    /// field using a dotted path (e.g. `correlations.rho_W`).
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("numerical failure in {context}{}: {detail}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        context: &'static str,
        iteration: Option<usize>,
        detail: String,
    },

    /// The assembled market law is not a valid Gaussian model.
    #[error("market model error in block `{block}`: {detail}")]
    Model { block: String, detail: String },

    #[error("portfolio solver error: {0}")]
    Solver(String),

    #[error("mean-surplus target is unreachable (unconstrained optimum surplus = {unconstrained_surplus})")]
    Infeasible { unconstrained_surplus: f64 },

    #[error("prior replica {index}: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment cell {cell}: {failures} of {replications} replications failed")]
    Experiment {
        cell: String,
        failures: usize,
        replications: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(
        context: &'static str,
        iteration: Option<usize>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Numerical {
            context,
            iteration,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

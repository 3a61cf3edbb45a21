use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by front ends to map failures onto exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Model,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column} [{section}]: {message}")]
    Parse {
        line: usize,
        column: usize,
        section: String,
        message: String,
    },

    #[error("unsupported section [{section}] at line {line}: {reason}")]
    UnsupportedSection {
        section: String,
        line: usize,
        reason: String,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("invalid {what} '{id}': {reason}")]
    InvalidComponent {
        what: &'static str,
        id: String,
        reason: String,
    },

    #[error("structure: {0}")]
    Structure(String),

    #[error("system is rank deficient ({rank} of {cols} columns); unmatched rows: [{}], unmatched columns: [{}]", unmatched_rows.join(", "), unmatched_cols.join(", "))]
    RankDeficient {
        rank: usize,
        cols: usize,
        unmatched_rows: Vec<String>,
        unmatched_cols: Vec<String>,
    },

    #[error("Newton solve did not converge{}: {reason} after {iterations} iterations, residual {residual:.3e}", fmt_step(*step))]
    NonConvergence {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("singular Jacobian{}: {detail}", fmt_step(*step))]
    SingularJacobian { step: Option<usize>, detail: String },

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("outside the model domain: {0}")]
    Domain(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_step(step: Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. }
            | Error::UnsupportedSection { .. }
            | Error::Scenario(_)
            | Error::InvalidComponent { .. }
            | Error::Io(_)
            | Error::Json(_) => ErrorCategory::Input,
            Error::Structure(_) | Error::RankDeficient { .. } | Error::Domain(_) => {
                ErrorCategory::Model
            }
            Error::NonConvergence { .. } | Error::SingularJacobian { .. } | Error::Numeric(_) => {
                ErrorCategory::Numeric
            }
        }
    }

    /// Attach a time-step index to solver failures that lack one.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::NonConvergence {
                step: None,
                iterations,
                residual,
                reason,
            } => Error::NonConvergence {
                step: Some(k),
                iterations,
                residual,
                reason,
            },
            Error::SingularJacobian { step: None, detail } => Error::SingularJacobian {
                step: Some(k),
                detail,
            },
            other => other,
        }
    }
}

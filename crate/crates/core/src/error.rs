use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration, plan or input table is structurally wrong.
    #[error("malformed input: {0}")]
    Malformed(String),

    /// The configuration admits no feasible plan.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// A quantity that must stay non-negative went below tolerance, or a
    /// similar internal contract was broken.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// Repair could not restore feasibility within the retry budget.
    #[error("over-constrained problem: {0}")]
    OverConstrained(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 1,
            Error::Json(e) if e.is_io() => 1,
            Error::Malformed(_) | Error::Infeasible(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Invariant(_) | Error::OverConstrained(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

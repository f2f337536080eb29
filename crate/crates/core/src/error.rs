use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A case description violates one of its invariants.
    #[error("case validation failed: {0}")]
    CaseValidation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A disturbance cannot be balanced by any causal policy.
    #[error("structurally infeasible balance: {0}")]
    StructuralInfeasibility(String),

    #[error("network is disconnected: buses {0:?} are not reachable from the slack bus")]
    Disconnected(Vec<String>),

    #[error("reduced susceptance matrix is singular ({0})")]
    SingularSusceptance(String),

    #[error("worst-case oracle only supports unbounded support")]
    UnsupportedOracle,

    #[error("QP solve failed: {0}")]
    Solve(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the input data rather than of the optimizer.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Solve(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

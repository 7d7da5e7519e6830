use thiserror::Error;

/// Errors raised by the scheduling library.
///
/// Variants fall in three families: malformed input, numerical limits of a
/// power model, and internal-invariant violations. The latter signal a bug in
/// the scheduler rather than a problem with the caller's data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("instance contains no packets")]
    EmptyInstance,
    #[error("malformed packet {id}: {reason}")]
    MalformedPacket { id: u64, reason: String },

    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("negative input {0} to inverse marginal-energy function")]
    NegativeInput(f64),
    #[error("no finite rate reaches marginal energy {0}")]
    BracketOverflow(f64),
    #[error("packet {0} has zero rate")]
    ZeroRate(usize),
    #[error("invalid power model: {0}")]
    InvalidModel(String),

    #[error("no candidate sub-intervals")]
    NoCandidates,
    #[error("inconsistent iteration trace: {0}")]
    InconsistentTrace(String),
    #[error("internal idle at t={at} while packets remain")]
    InternalIdle { at: f64 },
    #[error("packet {packet} unfinished at its deadline {deadline}")]
    InternalDeadlineMiss { packet: usize, deadline: f64 },

    #[error("schedule dimensions do not match instance: {0}")]
    DimensionMismatch(String),
    #[error("schedule is infeasible; run the feasibility check first")]
    InfeasibleInput,
    #[error("schedule violates optimality conditions: {0}")]
    NotOptimal(String),

    #[error("reference solver stopped after {iterations} iterations with residual {residual}")]
    DidNotConverge { iterations: usize, residual: f64 },
    #[error("instance too large for grid search: {0}")]
    TooLarge(String),
    #[error("generator config invalid: {0}")]
    ConfigInvalid(String),

    #[error("json: {0}")]
    Json(String),
}

impl Error {
    /// True for errors that indicate a bug in the scheduler rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            Error::InconsistentTrace(_)
                | Error::InternalIdle { .. }
                | Error::InternalDeadlineMiss { .. }
                | Error::NoCandidates
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

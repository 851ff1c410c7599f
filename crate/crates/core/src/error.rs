use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("insufficient donors: {eligible} eligible, at least 3 required")]
    InsufficientDonors { eligible: usize },

    #[error("bandwidth too small at target {target}")]
    BandwidthTooSmall { target: f64 },

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("effective degrees of freedom exhausted (denominator {denominator})")]
    DegreesOfFreedomExhausted { denominator: f64 },

    #[error("overlap violation: propensity {value} outside (0, 1]")]
    OverlapViolation { value: f64 },

    #[error("overlap violation in asymptotics: {0}")]
    AsymptoticOverlap(String),

    #[error("every grid point is infeasible ({count} points)")]
    AllGridPointsInfeasible { count: usize },

    #[error("bias constant vanishes; no interior optimum")]
    BiasConstantVanishes,

    #[error("rank-deficient design basis")]
    RankDeficient,

    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("method '{method}' requires {what}")]
    MissingInput { method: String, what: &'static str },

    #[error("smoother failed at evaluation point {index} (x = {x}): {source}")]
    AtEvalPoint {
        index: usize,
        x: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips [`Error::AtEvalPoint`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEvalPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

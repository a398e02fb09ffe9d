use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{count} vehicles of length {length} m do not fit on a ring of {circumference} m")]
    VehiclesDoNotFit {
        count: usize,
        length: f64,
        circumference: f64,
    },

    #[error("no samples left after skipping the first {skip} of {total} steps")]
    EmptyWindow { skip: usize, total: usize },

    #[error("step {step}, agent {agent}: {source}")]
    Step {
        step: usize,
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite utility for agent {agent} in round {round}")]
    NonFiniteUtility { agent: usize, round: usize },

    #[error("executed action has no sign change on velocity bracket [{low}, {high}]")]
    NoSignChange { low: f64, high: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

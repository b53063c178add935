use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The trace-tuple closure grew past the configured state budget.
    #[error("state explosion: closure of {seed} exceeded {limit} states")]
    StateExplosion { seed: String, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integrator failure: {0}")]
    Integrator(String),
}

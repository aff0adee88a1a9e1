use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point} is outside the domain {domain}")]
    OutOfDomain { point: String, domain: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("non-finite value encountered at {context}")]
    NonFinite { context: String },

    #[error("no data mass near x = {point}: kernel weight sum is zero")]
    EmptyNeighborhood { point: String },

    #[error("replication failed (n = {n}, replication {rep}, seed {seed}): {message}")]
    Replication {
        n: usize,
        rep: usize,
        seed: u64,
        message: String,
    },

    #[error("CSV error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Formats a point for error messages.
pub(crate) fn fmt_point(x: &[f64]) -> String {
    let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", coords.join(", "))
}

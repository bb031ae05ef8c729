//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {value} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("observation sequence too short: T = {t}, need T >= 2")]
    SequenceTooShort { t: usize },

    #[error("zero mass in recursion at step {t}; inputs violate strict positivity")]
    ZeroMass { t: usize },

    #[error("latent enumeration too large: {paths:.3e} paths exceeds limit {limit:.3e}")]
    EnumerationTooLarge { paths: f64, limit: f64 },

    #[error("window [{start}, {end}) with radius {radius} exceeds sequence of length {len}")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        radius: usize,
        len: usize,
    },

    #[error("empty percentile bucket [{lo}, {hi}]")]
    EmptyBucket { lo: f64, hi: f64 },

    #[error("forgetting bound violated at k = {k}: measured TV {measured:.6e} > bound {bound:.6e}")]
    BoundViolated { k: usize, measured: f64, bound: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

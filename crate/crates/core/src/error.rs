//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Error`]. Messages are single-line and
//! name the offending object (matrix, operator block, channel) so that a
//! command-line front end can forward them verbatim as diagnostics.

use crate::validate::ValidationReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix, kernel, or vector does not have the shape required by the
    /// dimension contract of its representation.
    #[error("dimension mismatch: {subject} has shape {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    Dimension {
        /// Name of the offending object, e.g. `"A_1"` or `"C_v2"`.
        subject: String,
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },

    /// A specification failed structural validation.
    #[error("validation failed: {0}")]
    Validation(ValidationReport),

    /// A matrix that must be inverted is singular or too badly conditioned.
    #[error("singular operator: {subject} (condition estimate {cond:.3e} exceeds bound {bound:.3e})")]
    Singular {
        subject: String,
        cond: f64,
        bound: f64,
    },

    /// A polynomial-kernel operation would exceed the configured degree cap.
    #[error("kernel degree {degree} exceeds cap {cap} in {context}; truncation is not performed")]
    DegreeCap {
        degree: usize,
        cap: usize,
        context: String,
    },

    /// A kernel or function was evaluated outside its declared domain.
    #[error("point {point:?} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { point: Vec<f64>, lo: f64, hi: f64 },

    /// The numerical integration produced a non-finite value.
    #[error("simulation diverged: non-finite {what} at t = {t}")]
    Diverged { what: String, t: f64 },

    /// A configuration value is unusable (non-positive step, step too large
    /// relative to the delays, missing history coverage, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An input signal violates the smoothness or initial-value requirements
    /// imposed by the blocks it feeds.
    #[error("inadmissible input: {0}")]
    Input(String),

    /// Reading or writing an interchange file failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A JSON document could not be parsed or does not match the schema.
    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for dimension errors.
    pub fn dim(subject: impl Into<String>, got: (usize, usize), want: (usize, usize)) -> Self {
        Error::Dimension {
            subject: subject.into(),
            got_rows: got.0,
            got_cols: got.1,
            want_rows: want.0,
            want_cols: want.1,
        }
    }
}

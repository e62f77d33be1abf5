use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands have incompatible shapes.
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A collection is too small (or too large) for the requested operation.
    Size(String),
    /// A function evaluated by the gradient oracle returned a non-finite value.
    NonFiniteOracle { coordinate: usize, value: f64 },
    /// Training produced a non-finite loss.
    Diverged {
        epoch: usize,
        batch: usize,
        neg_log_likelihood: f64,
        kl: f64,
        beta: f64,
    },
    /// A metric is undefined for the given input (e.g. empty held-out set).
    UndefinedMetric(&'static str),
    /// A feature source references a movie that is not present.
    MissingMovie(u64),
    /// Inconsistent configuration or arguments.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => write!(
                f,
                "{op}: dimension mismatch between {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::Size(msg) => write!(f, "size error: {msg}"),
            Error::NonFiniteOracle { coordinate, value } => write!(
                f,
                "gradient oracle: non-finite function value {value} while perturbing coordinate {coordinate}"
            ),
            Error::Diverged {
                epoch,
                batch,
                neg_log_likelihood,
                kl,
                beta,
            } => write!(
                f,
                "training diverged at epoch {epoch}, batch {batch}: neg_loglik={neg_log_likelihood}, kl={kl}, beta={beta}"
            ),
            Error::UndefinedMetric(what) => write!(f, "undefined metric: {what}"),
            Error::MissingMovie(id) => write!(f, "movie {id} is missing from the feature source"),
            Error::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for Error {}

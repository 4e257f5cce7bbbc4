use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two objects disagree on the size of one axis (`states`, `actions`, ...).
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    /// A row that must be a probability vector is not one.
    NotOnSimplex { field: String, sum: f64 },
    NegativeEntry { field: String, value: f64 },
    NonFinite { field: String },
    InvalidDiscount(f64),
    /// A tolerance (epsilon, slack) that must be strictly positive is not.
    InvalidTolerance(f64),
    Empty(&'static str),
    /// The requested (parameter set, operator, direction) combination is not supported.
    Unsupported(String),
    /// The particle cap cannot hold the coordinate-wise envelope witnesses.
    CapTooSmall { cap: usize, required: usize },
    InvalidConfig(String),
    NoConvergence { iterations: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                axis,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch on axis `{axis}`: expected {expected}, found {found}"
            ),
            Error::NotOnSimplex { field, sum } => {
                write!(f, "`{field}` is not a probability vector (sums to {sum})")
            }
            Error::NegativeEntry { field, value } => {
                write!(f, "`{field}` has a negative entry ({value})")
            }
            Error::NonFinite { field } => write!(f, "`{field}` contains a non-finite value"),
            Error::InvalidDiscount(g) => write!(f, "discount factor must lie in (0, 1), got {g}"),
            Error::InvalidTolerance(e) => write!(f, "tolerance must be positive, got {e}"),
            Error::Empty(what) => write!(f, "{what} must be non-empty"),
            Error::Unsupported(what) => write!(f, "unsupported combination: {what}"),
            Error::CapTooSmall { cap, required } => write!(
                f,
                "particle cap {cap} is below the {required} envelope witnesses"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NoConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
        }
    }
}

impl core::error::Error for Error {}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, configuration, or parameters.
    Invalid,
    /// A statistic lies outside its feasible region.
    Infeasible,
    /// Filesystem or other I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "groups have unequal sizes: group `{group}` has {found} observations, expected {expected}"
    )]
    UnbalancedData {
        group: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value {value} in group `{group}`")]
    NonFiniteValue { group: String, value: f64 },
    #[error("need at least 2 groups, found {0}")]
    TooFewGroups(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension {0} is too small, need at least 2")]
    DimensionTooSmall(usize),
    #[error("infeasible hyper-statistic: q = {q} < s^2/I = {bound}")]
    InfeasibleV { q: f64, bound: f64 },
    #[error("improper flat hyperprior cannot be sampled")]
    ImproperPriorNotSamplable,
    #[error("no residual information: each group has a single observation")]
    NoResidualInformation,
    #[error("discrepancy `{0}` is constant across reference draws")]
    DegenerateDiscrepancy(String),
    #[error("discrepancy `{name}` acts on {actual} space, expected {expected} space")]
    WrongDiscrepancySpace {
        name: String,
        expected: &'static str,
        actual: &'static str,
    },
    #[error("unknown discrepancy `{0}`")]
    UnknownDiscrepancy(String),
    #[error("no reference draws")]
    EmptyDraws,
    #[error("non-finite reference draw at index {0}")]
    NonFiniteDraw(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("value {0} lies outside [0, 1]")]
    OutOfRangeValue(f64),
    #[error("missing header line `group,value`")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("type mismatch for `{key}`: expected {expected}")]
    TypeMismatch { key: String, expected: &'static str },
    #[error("missing required key `{0}`")]
    MissingRequired(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InfeasibleV { .. } => ErrorClass::Infeasible,
            Error::Io(_) => ErrorClass::Io,
            Error::AtLine { source, .. } => source.class(),
            _ => ErrorClass::Invalid,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

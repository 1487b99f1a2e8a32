//! Error type shared across the library.

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// A signal or plan was constructed from an empty value sequence.
    EmptySignal,
    /// A strictly-positive signal contained a zero, negative or non-finite value.
    NonPositiveValue {
        index: usize,
        value: f64,
    },
    /// Two sequences that must share a horizon had different lengths.
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    /// An operation received a signal of the wrong kind.
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    /// Entropy is undefined: negative mass or zero total.
    EntropyUndefined,
    /// Reflection normalization is infeasible: the positive mass cannot
    /// absorb the negative mass.
    InfeasibleNormalization {
        positive: f64,
        negative: f64,
    },
    /// The incentive signal has zero volatility, so z-scores are undefined.
    DegenerateIncentive,
    /// A reference bound coincides with the baseline, so the denominator of a
    /// relative metric vanishes.
    DegenerateBound,
    /// The baseline demand is identically zero or has zero volatility where a
    /// ratio against it is required.
    DegenerateBaseline,
    /// Pearson correlation is undefined because one series is constant.
    UndefinedCorrelation,
    /// The diversity measure requires the two sequences to hold the same
    /// multiset of values.
    NotAPermutation,
    /// A plan generation scheme was given parameters outside its valid range.
    InvalidScheme(String),
    /// The number of candidate combinations exceeds the configured budget.
    BudgetExceeded {
        combinations: u128,
        budget: u64,
    },
    /// The selection protocol was violated (e.g. aggregating over a child
    /// whose subtree has unselected agents).
    ProtocolViolation(String),
    /// The requested scenario window does not fit into the horizon.
    ScenarioWindow {
        horizon: usize,
        required: usize,
    },
    /// A data source provided fewer values than the operation needs.
    InsufficientData {
        needed: usize,
        available: usize,
    },
    /// A CSV record could not be parsed or failed validation.
    CsvData {
        row: usize,
        message: String,
    },
    /// A derived signal violated its defining constraint beyond tolerance.
    ConstraintViolation {
        constraint: &'static str,
        residual: f64,
    },
    /// Per-agent input rows disagree on the number of agents.
    MismatchedAgents {
        expected: usize,
        found: usize,
    },
    /// A run configuration is internally inconsistent.
    InvalidConfig(String),
    /// An error with the pipeline stage it occurred in attached.
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
    Io(std::io::Error),
    Json(serde_json::Error),
    Csv(csv::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptySignal => write!(f, "signal must contain at least one value"),
            Error::NonPositiveValue { index, value } => {
                write!(f, "value at index {index} must be positive and finite, got {value}")
            }
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::KindMismatch { expected, found } => {
                write!(f, "signal kind mismatch: expected {expected}, found {found}")
            }
            Error::EntropyUndefined => {
                write!(f, "entropy undefined: values must be non-negative with positive sum")
            }
            Error::InfeasibleNormalization { positive, negative } => write!(
                f,
                "normalization infeasible: positive mass {positive} cannot absorb negative mass {negative}"
            ),
            Error::DegenerateIncentive => {
                write!(f, "incentive signal has zero volatility")
            }
            Error::DegenerateBound => {
                write!(f, "reference bound coincides with the baseline")
            }
            Error::DegenerateBaseline => {
                write!(f, "baseline demand is degenerate for this operation")
            }
            Error::UndefinedCorrelation => {
                write!(f, "correlation undefined: a series has zero variance")
            }
            Error::NotAPermutation => {
                write!(f, "sequences do not hold the same multiset of values")
            }
            Error::InvalidScheme(msg) => write!(f, "invalid generation scheme: {msg}"),
            Error::BudgetExceeded { combinations, budget } => write!(
                f,
                "combination count {combinations} exceeds budget {budget}"
            ),
            Error::ProtocolViolation(msg) => write!(f, "selection protocol violation: {msg}"),
            Error::ScenarioWindow { horizon, required } => write!(
                f,
                "horizon {horizon} too short for scenario window (needs at least {required})"
            ),
            Error::InsufficientData { needed, available } => {
                write!(f, "need {needed} values, only {available} available")
            }
            Error::CsvData { row, message } => write!(f, "csv row {row}: {message}"),
            Error::ConstraintViolation { constraint, residual } => {
                write!(f, "constraint '{constraint}' violated, residual {residual:e}")
            }
            Error::MismatchedAgents { expected, found } => {
                write!(f, "expected {expected} agents per record, found {found}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Stage { stage, source } => write!(f, "stage '{stage}': {source}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Stage { source, .. } => Some(source.as_ref()),
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            Error::Csv(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OpeError>;

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration would visit up to {needed:.3e} outcomes, cap is {cap}")]
    EnumerationCap { needed: f64, cap: u64 },

    #[error("invalid fold count: k = {k}, n = {n} (need 2 <= k <= n)")]
    FoldCount { k: usize, n: usize },

    #[error("support violation: behavior probability is 0 at state {state}, action {action} while the evaluation policy puts mass {eval_mass} there")]
    SupportViolation {
        state: usize,
        action: usize,
        eval_mass: f64,
    },

    #[error(
        "zero behavior propensity for realized action {action} at state {state} (step {step})"
    )]
    ZeroPropensity {
        step: usize,
        state: usize,
        action: usize,
    },

    #[error("efficiency bound requires horizon 0 (got {0})")]
    HorizonNotZero(usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: ragged horizon, expected {expected} steps, found {found}")]
    RaggedHorizon {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("cell {index}: actual value is zero, relative error undefined")]
    ZeroActualValue { index: usize },

    #[error("cell {index}: missing {field}")]
    MissingVariance { index: usize, field: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl OpeError {
    pub(crate) fn invalid(path: impl Into<String>, detail: impl Into<String>) -> Self {
        OpeError::Invalid {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Whether the error stems from bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            OpeError::Io(_)
                | OpeError::EnumerationCap { .. }
                | OpeError::SupportViolation { .. }
                | OpeError::ZeroPropensity { .. }
        )
    }
}

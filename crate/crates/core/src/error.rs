use thiserror::Error;

/// Errors raised by the toolkit. Verdicts (Supported / Refuted / Inconclusive)
/// are not errors; they live in [`crate::evidence::Evidence`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("unknown function `{name}` at line {line}, column {column}")]
    UnknownFunction {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {requested} is out of range: supremum of the function is {supremum}")]
    Range { requested: f64, supremum: f64 },

    #[error("class violation: {0}")]
    ClassViolation(String),

    #[error("precondition failed: {message}")]
    Precondition {
        message: String,
        witness: Vec<f64>,
    },

    #[error("refinement budget exhausted on cell [{lo}, {hi}] (sampled oscillation {oscillation})")]
    RefinementBudget { lo: f64, hi: f64, oscillation: f64 },

    #[error("finite escape: norm exceeded {guard:e} between t={t_lo} and t={t_hi}")]
    FiniteEscape { t_lo: f64, t_hi: f64, guard: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Neumann series would not converge: alpha * sigma_max = {0:.6}")]
    DivergenceRisk(f64),

    #[error("solver blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },

    #[error("tape does not match model: {0}")]
    Consistency(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures caused by the numbers themselves rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        if let Error::Sample { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::BlowUp { .. }
                | Error::NonFinite(_)
                | Error::RolloutDiverged { .. }
                | Error::DivergenceRisk(_)
        )
    }
}

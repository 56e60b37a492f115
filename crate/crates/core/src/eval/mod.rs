//! Error metrics, autoregressive rollout and energy/entropy diagnostics.

mod metrics;
mod report;
mod rollout;

pub use metrics::{energy, gradient, mse, rel_h1, rel_l2, spectral_entropy, Grid};
pub use report::{
    evaluate, grid_of, round_sig, validate_report, EvalConfig, EvalReport, PerStep, SampleFailure, StepMetrics,
    CSV_HEADER, REPORT_FORMAT, REPORT_VERSION,
};
pub use rollout::{rollout, Surrogate};

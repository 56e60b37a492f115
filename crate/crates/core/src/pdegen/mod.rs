//! Reference trajectories for advection, Burgers, diffusion-sorption and
//! Darcy flow, and the GNOD dataset file.

mod advection;
mod burgers;
mod darcy;
mod dataset;
mod ic;
mod sorption;
mod spec;

pub use advection::solve_advection;
pub use burgers::solve_burgers;
pub use darcy::{solve_darcy, DARCY_TOL};
pub use dataset::{generate_dataset, gnod_file_size, gnod_payload_bytes, TrajectoryDataset, GNOD_MAGIC, GNOD_VERSION};
pub use ic::{sample_initial_condition, SinusoidIc, IC_MODES};
pub use sorption::{
    retardation, solve_diffusion_sorption, RightBoundary, SorptionParams, SorptionSetup, SORPTION_CLAMP, SORPTION_MAX,
};
pub use spec::{EquationKind, EquationSpec};

use crate::error::{Error, Result};

pub(crate) fn check_power_of_two(n: usize) -> Result<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::Config(format!("periodic grids need a power of two >= 16 points, got {n}")));
    }
    Ok(())
}

/// Splits each output interval into the fewest equal substeps no longer than
/// `dt_max`. Returns `(substeps per frame, substep length)`.
pub(crate) fn frame_schedule(t_end: f64, n_steps: usize, dt_max: f64) -> Result<(usize, f64)> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
    }
    let frame = t_end / n_steps as f64;
    let substeps = if dt_max.is_finite() {
        // tolerate rounding when dt_max divides the frame exactly
        ((frame / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    } else {
        1
    };
    Ok((substeps, frame / substeps as f64))
}

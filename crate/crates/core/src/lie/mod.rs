//! Low-rank skew-symmetric generators and the manifold-constrained update.
//!
//! A generator `A = U V^T - V U^T` lives in so(C), the tangent space of the
//! rotation group SO(C) at the identity. The layer applies the linearized
//! group action `z + alpha A z`; [`LowRankGenerator::exact_step`] applies
//! `exp(alpha A) z` and exists for validation.

mod generator;
mod theory;

pub use generator::{LowRankGenerator, DEFAULT_ALPHA};
pub(crate) use generator::{expand_add, project};
pub use theory::{
    basis_spectral_norm, growth_bound_check, neumann_inverse_apply, norm_drift, spectral_norm,
    GeneratorNormEstimate, GrowthCheck, NeumannSolution,
};

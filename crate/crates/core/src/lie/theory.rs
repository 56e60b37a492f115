//! Executable forms of the stability statements for the linearized step
//! `z+ = (I + alpha A) z` with skew `A`.

use serde::{Deserialize, Serialize};

use super::generator::LowRankGenerator;
use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::{dot, norm2, Tensor};

/// Spectral-norm estimate of a generator's `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNormEstimate {
    pub sigma_max: f64,
    pub iterations: usize,
}

/// Power iteration on `A^T A` using only the low-rank action. Never
/// overestimates: the returned value is `||A x||` for a unit vector `x`.
pub fn spectral_norm(gen: &LowRankGenerator, iters: usize) -> GeneratorNormEstimate {
    let iters = iters.max(1);
    let c = gen.channels();
    let mut rng = RngStream::new(0x5EED_0F_A11CE, c as u64);
    let mut x = Tensor::from_vec(&[c, 1], (0..c).map(|_| rng.gaussian()).collect()).expect("c x 1");
    normalize(&mut x);
    let mut sigma = 0.0;
    let mut done = 0;
    for _ in 0..iters {
        done += 1;
        let ax = gen.apply(&x).expect("shape matches");
        sigma = ax.norm();
        if sigma == 0.0 {
            break;
        }
        // A^T A x = -A (A x)
        let mut next = gen.apply(&ax).expect("shape matches");
        for v in next.data_mut() {
            *v = -*v;
        }
        if next.norm() == 0.0 {
            break;
        }
        normalize(&mut next);
        x = next;
    }
    let final_sigma = gen.apply(&x).expect("shape matches").norm();
    GeneratorNormEstimate {
        sigma_max: final_sigma.max(sigma.min(final_sigma)),
        iterations: done,
    }
}

fn normalize(x: &mut Tensor) {
    let n = x.norm();
    if n > 0.0 {
        x.data_mut().iter_mut().for_each(|v| *v /= n);
    }
}

/// Spectral norm of a tall `C x r` basis via power iteration on its `r x r` Gram matrix.
pub fn basis_spectral_norm(b: &Tensor) -> f64 {
    let (c, r) = (b.shape()[0], b.shape()[1]);
    let d = b.data();
    let mut gram = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            gram[i * r + j] = (0..c).map(|k| d[k * r + i] * d[k * r + j]).sum();
        }
    }
    let mut x = vec![1.0; r];
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let y: Vec<f64> = (0..r).map(|i| dot(&gram[i * r..(i + 1) * r], &x)).collect();
        let n = norm2(&y);
        if n == 0.0 {
            return 0.0;
        }
        lambda = dot(&x, &y) / dot(&x, &x);
        x = y.iter().map(|v| v / n).collect();
    }
    lambda.max(0.0).sqrt()
}

/// `(||z+||^2 - ||z||^2, alpha^2 ||A z||^2)`; equal up to rounding because the
/// first-order term `alpha z^T (A + A^T) z` vanishes.
pub fn norm_drift(gen: &LowRankGenerator, z: &Tensor) -> Result<(f64, f64)> {
    let az = gen.apply(z)?;
    let zp = gen.mcl_step(z)?;
    let before = dot(z.data(), z.data());
    let after = dot(zp.data(), zp.data());
    let lhs = after - before;
    let rhs = gen.alpha * gen.alpha * dot(az.data(), az.data());
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCheck {
    /// `||z_L|| / ||z_0||`
    pub observed: f64,
    /// `prod_l sqrt(1 + alpha_l^2 M^2)`, i.e. `(1 + alpha^2 M^2)^(L/2)` for shared alpha.
    pub bound: f64,
}

/// Applies the stack of linearized steps to `z0` and compares the norm growth
/// with the multi-layer bound. Every layer must satisfy `||A_l||_2 <= M`.
pub fn growth_bound_check(gens: &[LowRankGenerator], z0: &Tensor, m: f64) -> Result<GrowthCheck> {
    if !(m >= 0.0) {
        return Err(Error::Precondition(format!("norm bound M must be non-negative, got {m}")));
    }
    let mut bound = 1.0;
    for (layer, g) in gens.iter().enumerate() {
        let est = spectral_norm(g, 200);
        if est.sigma_max > m * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "layer {layer}: ||A||_2 ~ {:.6} exceeds M = {m}",
                est.sigma_max
            )));
        }
        bound *= (1.0 + g.alpha * g.alpha * m * m).sqrt();
    }
    let z0_norm = z0.norm();
    if z0_norm == 0.0 {
        return Err(Error::Precondition("initial state has zero norm".into()));
    }
    let mut z = z0.clone();
    for g in gens {
        z = g.mcl_step(&z)?;
    }
    Ok(GrowthCheck {
        observed: z.norm() / z0_norm,
        bound,
    })
}

/// Iteration count used by [`neumann_inverse_apply`] for its hypothesis check.
const NEUMANN_NORM_ITERS: usize = 1000;
/// Relative safety margin on the estimated `alpha ||A||_2` before iterating;
/// power iteration can only underestimate.
const NEUMANN_GATE_MARGIN: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub x: Tensor,
    pub terms: usize,
    pub relative_residual: f64,
    /// `alpha * sigma_max` used for the hypothesis gate.
    pub contraction: f64,
}

/// Solves `(I + alpha A) x = y` with the series `sum_k (-alpha A)^k y`.
///
/// Requires `alpha ||A||_2 < 1`; the check happens before any term is formed.
/// Stops once a term drops below `tol ||y||`, or at
/// `max(10 * ceil(1 / (1 - rho)), ceil(ln(tol) / ln(rho)) + 10)` terms.
pub fn neumann_inverse_apply(gen: &LowRankGenerator, y: &Tensor, tol: f64) -> Result<NeumannSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let sigma = spectral_norm(gen, NEUMANN_NORM_ITERS).sigma_max;
    let rho = gen.alpha.abs() * sigma;
    if rho * (1.0 + NEUMANN_GATE_MARGIN) >= 1.0 {
        return Err(Error::DivergenceRisk(rho));
    }
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(NeumannSolution {
            x: y.clone(),
            terms: 0,
            relative_residual: 0.0,
            contraction: rho,
        });
    }

    let by_rate = if rho > 0.0 {
        (tol.ln() / rho.ln()).ceil() as usize + 10
    } else {
        1
    };
    let max_terms = (10.0 * (1.0 / (1.0 - rho)).ceil()) as usize;
    let max_terms = max_terms.max(by_rate);

    let mut x = y.clone();
    let mut term = y.clone();
    let mut terms = 1;
    while terms < max_terms {
        let mut next = gen.apply(&term)?;
        for v in next.data_mut() {
            *v *= -gen.alpha;
        }
        term = next;
        for (xi, ti) in x.data_mut().iter_mut().zip(term.data()) {
            *xi += ti;
        }
        terms += 1;
        if term.norm() < tol * y_norm {
            break;
        }
    }

    let tx = gen.mcl_step(&x)?;
    let res = norm2(&tx.data().iter().zip(y.data()).map(|(a, b)| a - b).collect::<Vec<_>>()) / y_norm;
    if res > tol {
        return Err(Error::NonConvergence {
            iterations: terms,
            residual: res,
        });
    }
    // ||T^-1||_2 <= 1 / (1 - alpha ||A||_2)
    debug_assert!(x.norm() <= y_norm / (1.0 - rho) * (1.0 + 1e-12));
    Ok(NeumannSolution {
        x,
        terms,
        relative_residual: res,
        contraction: rho,
    })
}

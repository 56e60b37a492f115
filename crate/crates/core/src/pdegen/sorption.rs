use serde::{Deserialize, Serialize};

use super::frame_schedule;
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Lower bound applied to `u` inside the Freundlich power.
pub const SORPTION_CLAMP: f64 = 1e-8;

/// Upper bound a physical solution may reach before it is treated as a blow-up.
pub const SORPTION_MAX: f64 = 1.05;

/// Real-axis extent of the classic RK4 stability region.
const RK4_REAL_LIMIT: f64 = 2.785;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SorptionParams {
    /// porosity
    pub phi: f64,
    /// bulk density
    pub rho_s: f64,
    /// Freundlich coefficient
    pub k: f64,
    /// Freundlich exponent
    pub n_f: f64,
    /// diffusion coefficient
    pub d: f64,
}

impl Default for SorptionParams {
    fn default() -> Self {
        Self {
            phi: 0.29,
            rho_s: 2880.0,
            k: 3.5e-4,
            n_f: 0.874,
            d: 5e-4,
        }
    }
}

impl SorptionParams {
    fn coefficient(&self) -> f64 {
        (1.0 - self.phi) / self.phi * self.rho_s * self.k * self.n_f
    }

    fn retardation_unchecked(&self, u: f64) -> f64 {
        1.0 + self.coefficient() * u.max(SORPTION_CLAMP).powf(self.n_f - 1.0)
    }
}

/// Freundlich retardation `R(u) = 1 + (1 - phi)/phi rho_s k n_f u^(n_f - 1)`.
pub fn retardation(u: f64, params: &SorptionParams) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("retardation needs u >= 0, got {u}")));
    }
    Ok(params.retardation_unchecked(u))
}

/// Condition at `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RightBoundary {
    /// Robin outflow `u = -D u_x`.
    Outflow,
    Dirichlet(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SorptionSetup {
    pub params: SorptionParams,
    /// Dirichlet value at `x = 0`.
    pub left: f64,
    pub right: RightBoundary,
    /// Overrides the internal step (rounded down to divide the frame spacing).
    pub dt: Option<f64>,
}

impl Default for SorptionSetup {
    fn default() -> Self {
        Self {
            params: SorptionParams::default(),
            left: 1.0,
            right: RightBoundary::Outflow,
            dt: None,
        }
    }
}

/// `u_t = D / R(u) u_xx` on `(0, 1)` with `N` finite-volume cells and RK4 in
/// time. Returns `[n_steps + 1, N]` frames at uniform times on `[0, t_end]`.
pub fn solve_diffusion_sorption(u0: &Tensor, setup: &SorptionSetup, t_end: f64, n_steps: usize) -> Result<Tensor> {
    let n = u0.len();
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 cells, got {n}")));
    }
    let p = setup.params;
    for (name, v) in [("phi", p.phi), ("rho_s", p.rho_s), ("k", p.k), ("n_f", p.n_f), ("D", p.d)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if p.phi >= 1.0 {
        return Err(Error::Config(format!("porosity must be below 1, got {}", p.phi)));
    }
    if u0.data().iter().any(|&v| !(0.0..=SORPTION_MAX).contains(&v)) {
        return Err(Error::Domain(format!("initial state must lie in [0, {SORPTION_MAX}]")));
    }
    let h = 1.0 / n as f64;
    let limit = match setup.dt {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Config(format!("time step must be positive, got {d}"))),
        None => {
            // R decreases in u, so the fastest diffusion happens at the largest admissible state
            let r_min = p.retardation_unchecked(SORPTION_MAX);
            0.5 * RK4_REAL_LIMIT * r_min * h * h / (4.0 * p.d)
        }
    };
    let (substeps, dt) = frame_schedule(t_end, n_steps, limit)?;

    let robin = 2.0 * p.d / h;
    let rhs = |u: &[f64], out: &mut [f64]| {
        let right = match setup.right {
            RightBoundary::Outflow => robin * u[n - 1] / (1.0 + robin),
            RightBoundary::Dirichlet(v) => v,
        };
        for i in 0..n {
            let west = if i == 0 {
                2.0 * (u[0] - setup.left)
            } else {
                u[i] - u[i - 1]
            };
            let east = if i == n - 1 {
                2.0 * (right - u[n - 1])
            } else {
                u[i + 1] - u[i]
            };
            out[i] = p.d / p.retardation_unchecked(u[i]) * (east - west) / (h * h);
        }
    };

    let mut u = u0.data().to_vec();
    let mut frames = Vec::with_capacity((n_steps + 1) * n);
    frames.extend_from_slice(&u);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut step = 0;
    for _ in 1..=n_steps {
        for _ in 0..substeps {
            rhs(&u, &mut k1);
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs(&stage, &mut k2);
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs(&stage, &mut k3);
            for i in 0..n {
                stage[i] = u[i] + dt * k3[i];
            }
            rhs(&stage, &mut k4);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            step += 1;
        }
        if let Some(bad) = u.iter().find(|&&v| !(v > -SORPTION_CLAMP && v <= SORPTION_MAX)) {
            return Err(Error::BlowUp {
                step,
                reason: format!("diffusion-sorption state {bad} left [0, {SORPTION_MAX}]"),
            });
        }
        frames.extend_from_slice(&u);
    }
    Tensor::from_vec(&[n_steps + 1, n], frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retardation_at_unit_concentration() {
        let p = SorptionParams::default();
        let expected = 1.0 + (1.0 - 0.29) / 0.29 * 2880.0 * 3.5e-4 * 0.874;
        assert!((retardation(1.0, &p).unwrap() - expected).abs() < 1e-14);
        // evaluated independently in extended precision
        assert!((retardation(1.0, &p).unwrap() - 3.156_911_448_275_862).abs() < 1e-12);
    }

    #[test]
    fn retardation_decreases_towards_one() {
        let p = SorptionParams::default();
        let mut prev = f64::INFINITY;
        for e in 0..12 {
            let r = retardation(10f64.powi(e), &p).unwrap();
            assert!(r > 1.0 && r < prev);
            prev = r;
        }
    }

    #[test]
    fn retardation_clamps_near_zero() {
        let p = SorptionParams::default();
        let r = retardation(1e-12, &p).unwrap();
        assert!(r.is_finite());
        assert_eq!(r, retardation(SORPTION_CLAMP, &p).unwrap());
        assert_eq!(retardation(0.0, &p).unwrap(), r);
        assert!(matches!(retardation(-1e-3, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn consistent_boundaries_are_steady() {
        let setup = SorptionSetup {
            right: RightBoundary::Dirichlet(1.0),
            ..Default::default()
        };
        let n = 128;
        let traj = solve_diffusion_sorption(&Tensor::from_vec(&[n], vec![1.0; n]).unwrap(), &setup, 500.0, 100).unwrap();
        let worst = traj.data().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn front_is_monotone_in_time() {
        let n = 64;
        let traj = solve_diffusion_sorption(&Tensor::zeros(&[n]), &SorptionSetup::default(), 50.0, 50).unwrap();
        for f in 1..=50 {
            for i in 0..n {
                assert!(traj.get(&[f, i]) >= traj.get(&[f - 1, i]) - 1e-12, "frame {f} cell {i}");
            }
        }
        assert!(traj.get(&[50, 0]) > 0.5);
    }

    #[test]
    fn fourth_order_in_time() {
        let n = 64;
        let u0: Vec<f64> = (0..n).map(|i| 0.5 + 0.2 * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()).collect();
        let u0 = Tensor::from_vec(&[n], u0).unwrap();
        let run = |dt: f64| {
            let setup = SorptionSetup {
                dt: Some(dt),
                ..Default::default()
            };
            solve_diffusion_sorption(&u0, &setup, 8.0, 1).unwrap().data()[n..].to_vec()
        };
        let (a, b, c) = (run(0.5), run(0.25), run(0.125));
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let order = (diff(&a, &b) / diff(&b, &c)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn rejects_out_of_range_initial_state() {
        let bad = Tensor::from_vec(&[4], vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!(solve_diffusion_sorption(&bad, &SorptionSetup::default(), 1.0, 1).is_err());
    }
}

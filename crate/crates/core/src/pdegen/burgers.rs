use num_complex::Complex64;

use super::{check_power_of_two, frame_schedule};
use crate::error::{Error, Result};
use crate::numerics::fft::{fft_nd, wavenumber, Direction};
use crate::numerics::tensor::Tensor;

/// Advective Courant number used for the explicit nonlinear term.
const BURGERS_CFL: f64 = 0.1;

/// Viscous Burgers `u_t + u u_x = nu u_xx` on `[0, 2 pi)`.
///
/// Pseudo-spectral in space with the nonlinear product dealiased by the 2/3
/// rule. Time stepping is Adams-Bashforth 2 for `-(u^2/2)_x` and
/// Crank-Nicolson for `nu u_xx`; the first step uses an IMEX Heun predictor
/// corrector so the scheme is second order from the start. `dt` overrides the
/// internal step (rounded down to divide the frame spacing).
pub fn solve_burgers(u0: &Tensor, nu: f64, t_end: f64, n_steps: usize, dt: Option<f64>) -> Result<Tensor> {
    let n = u0.len();
    check_power_of_two(n)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::Config(format!("viscosity must be positive, got {nu}")));
    }
    if !u0.all_finite() {
        return Err(Error::NonFinite("Burgers initial condition".into()));
    }
    let limit = match dt {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Config(format!("time step must be positive, got {d}"))),
        None => {
            let umax = u0.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
            let h = std::f64::consts::TAU / n as f64;
            if umax > 0.0 {
                BURGERS_CFL * h / umax
            } else {
                f64::INFINITY
            }
        }
    };
    let (substeps, dt) = frame_schedule(t_end, n_steps, limit)?;

    let ks: Vec<f64> = (0..n)
        .map(|j| if j == n / 2 { 0.0 } else { wavenumber(j, n) as f64 })
        .collect();
    let keep: Vec<bool> = (0..n).map(|j| 3 * wavenumber(j, n).unsigned_abs() < n as u64).collect();
    let lin: Vec<f64> = (0..n).map(|j| -nu * (wavenumber(j, n) as f64).powi(2)).collect();
    let explicit: Vec<f64> = lin.iter().map(|l| 1.0 + 0.5 * dt * l).collect();
    let implicit: Vec<f64> = lin.iter().map(|l| 1.0 / (1.0 - 0.5 * dt * l)).collect();

    let mut scratch = vec![Complex64::default(); n];
    // -(1/2) d/dx (u^2), dealiased
    let mut nonlinear = |u_hat: &[Complex64], out: &mut [Complex64]| {
        scratch.copy_from_slice(u_hat);
        fft_nd(&mut scratch, &[n], Direction::Inverse);
        for s in scratch.iter_mut() {
            *s = Complex64::new(s.re * s.re, 0.0);
        }
        fft_nd(&mut scratch, &[n], Direction::Forward);
        for j in 0..n {
            out[j] = if keep[j] {
                Complex64::new(0.0, -0.5 * ks[j]) * scratch[j]
            } else {
                Complex64::default()
            };
        }
    };

    let mut u_hat: Vec<Complex64> = u0.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut u_hat, &[n], Direction::Forward);

    let mut frames = Vec::with_capacity((n_steps + 1) * n);
    frames.extend_from_slice(u0.data());
    let mut n_prev = vec![Complex64::default(); n];
    let mut n_curr = vec![Complex64::default(); n];
    let mut predictor = vec![Complex64::default(); n];
    let mut n_pred = vec![Complex64::default(); n];
    let mut step = 0usize;
    for _ in 1..=n_steps {
        for _ in 0..substeps {
            nonlinear(&u_hat, &mut n_curr);
            if step == 0 {
                for j in 0..n {
                    predictor[j] = (explicit[j] * u_hat[j] + dt * n_curr[j]) * implicit[j];
                }
                nonlinear(&predictor, &mut n_pred);
                for j in 0..n {
                    u_hat[j] = (explicit[j] * u_hat[j] + 0.5 * dt * (n_curr[j] + n_pred[j])) * implicit[j];
                }
            } else {
                for j in 0..n {
                    u_hat[j] = (explicit[j] * u_hat[j] + dt * (1.5 * n_curr[j] - 0.5 * n_prev[j])) * implicit[j];
                }
            }
            std::mem::swap(&mut n_prev, &mut n_curr);
            step += 1;
        }
        let mut phys = u_hat.clone();
        fft_nd(&mut phys, &[n], Direction::Inverse);
        if phys.iter().any(|c| !c.re.is_finite()) {
            return Err(Error::BlowUp {
                step,
                reason: "non-finite Burgers state".into(),
            });
        }
        frames.extend(phys.iter().map(|c| c.re));
    }
    Tensor::from_vec(&[n_steps + 1, n], frames)
}

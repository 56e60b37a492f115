use num_complex::Complex64;

use super::{check_power_of_two, frame_schedule};
use crate::error::{Error, Result};
use crate::numerics::fft::{fft_nd, wavenumber, Direction};
use crate::numerics::tensor::Tensor;

/// Extent of the classic RK4 stability region along the imaginary axis.
const RK4_IMAG_LIMIT: f64 = 2.8;

/// Internal step as a fraction of the stability limit. Kept well below the
/// limit so that the time error stays under the spectral-accuracy floor.
const ADVECTION_DT_FRACTION: f64 = 0.1;

/// `u_t + beta u_x = 0` on the periodic domain `[0, 2 pi)`. Spatial derivative
/// by `i k` in Fourier space, classic RK4 in time. Returns `[n_steps + 1, N]`
/// frames at uniform times on `[0, t_end]`.
pub fn solve_advection(u0: &Tensor, beta: f64, t_end: f64, n_steps: usize) -> Result<Tensor> {
    let n = u0.len();
    check_power_of_two(n)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("advection speed must be finite and non-negative, got {beta}")));
    }
    let kmax = (n / 2) as f64;
    let limit = if beta > 0.0 {
        ADVECTION_DT_FRACTION * RK4_IMAG_LIMIT / (beta * kmax)
    } else {
        f64::INFINITY
    };
    let (substeps, dt) = frame_schedule(t_end, n_steps, limit)?;

    // d/dt u_hat = -i beta k u_hat; the Nyquist bin has no derivative
    let rate: Vec<Complex64> = (0..n)
        .map(|j| {
            let k = wavenumber(j, n);
            if n % 2 == 0 && j == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -beta * k as f64)
            }
        })
        .collect();

    let mut u_hat: Vec<Complex64> = u0.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut u_hat, &[n], Direction::Forward);

    let mut frames = Vec::with_capacity((n_steps + 1) * n);
    frames.extend_from_slice(u0.data());
    let mut k1 = vec![Complex64::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut stage = k1.clone();
    for frame in 1..=n_steps {
        for _ in 0..substeps {
            for j in 0..n {
                k1[j] = rate[j] * u_hat[j];
                stage[j] = u_hat[j] + 0.5 * dt * k1[j];
            }
            for j in 0..n {
                k2[j] = rate[j] * stage[j];
            }
            for j in 0..n {
                stage[j] = u_hat[j] + 0.5 * dt * k2[j];
            }
            for j in 0..n {
                k3[j] = rate[j] * stage[j];
            }
            for j in 0..n {
                stage[j] = u_hat[j] + dt * k3[j];
            }
            for j in 0..n {
                k4[j] = rate[j] * stage[j];
            }
            for j in 0..n {
                u_hat[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        let mut phys = u_hat.clone();
        fft_nd(&mut phys, &[n], Direction::Inverse);
        if phys.iter().any(|c| !c.re.is_finite()) {
            return Err(Error::BlowUp {
                step: frame * substeps,
                reason: "non-finite advection state".into(),
            });
        }
        frames.extend(phys.iter().map(|c| c.re));
    }
    Tensor::from_vec(&[n_steps + 1, n], frames)
}

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// Highest wavenumber present in a sampled initial condition.
pub const IC_MODES: usize = 8;

/// `u0(x) = (1/m) sum_k a_k sin(k x + phi_k)` on `[0, 2 pi)`, where `m` is the
/// grid maximum of the unscaled sum so that `max |u0| = 1` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidIc {
    pub amplitudes: [f64; IC_MODES],
    pub phases: [f64; IC_MODES],
    pub scale: f64,
}

impl SinusoidIc {
    pub fn sample(rng: &mut RngStream, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::Config(format!("initial condition needs at least 16 points, got {n}")));
        }
        let mut amplitudes = [0.0; IC_MODES];
        let mut phases = [0.0; IC_MODES];
        for a in amplitudes.iter_mut() {
            *a = rng.uniform_range(-1.0, 1.0);
        }
        for p in phases.iter_mut() {
            *p = rng.uniform_range(0.0, TAU);
        }
        let mut ic = Self {
            amplitudes,
            phases,
            scale: 1.0,
        };
        let peak = (0..n).map(|i| ic.raw(grid_point(i, n)).abs()).fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(Error::Domain("sampled initial condition vanishes on the grid".into()));
        }
        ic.scale = peak;
        Ok(ic)
    }

    fn raw(&self, x: f64) -> f64 {
        (1..=IC_MODES)
            .map(|k| self.amplitudes[k - 1] * (k as f64 * x + self.phases[k - 1]).sin())
            .sum()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x) / self.scale
    }

    pub fn on_grid(&self, n: usize) -> Tensor {
        Tensor::from_vec(&[n], (0..n).map(|i| self.eval(grid_point(i, n))).collect()).expect("shape")
    }
}

pub(crate) fn grid_point(i: usize, n: usize) -> f64 {
    TAU * i as f64 / n as f64
}

/// Random band-limited periodic field on `n` points, normalized to `max |u0| = 1`.
pub fn sample_initial_condition(rng: &mut RngStream, n: usize) -> Result<Tensor> {
    Ok(SinusoidIc::sample(rng, n)?.on_grid(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fft::{dft_real, wavenumber, Direction};

    #[test]
    fn reproducible() {
        let a = sample_initial_condition(&mut RngStream::new(5, 2), 64).unwrap();
        let b = sample_initial_condition(&mut RngStream::new(5, 2), 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_peak() {
        for seed in 0..20 {
            let u = sample_initial_condition(&mut RngStream::new(seed, 0), 128).unwrap();
            let peak = u.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert_eq!(peak, 1.0);
        }
    }

    #[test]
    fn band_limited() {
        let n = 256;
        let u = sample_initial_condition(&mut RngStream::new(9, 0), n).unwrap();
        let spec = dft_real(&u, Direction::Forward).unwrap();
        for (k, c) in spec.data().iter().enumerate() {
            if wavenumber(k, n).unsigned_abs() as usize > IC_MODES {
                assert!(c.norm() / n as f64 <= 1e-12, "bin {k}: {}", c.norm());
            }
        }
    }

    #[test]
    fn too_coarse() {
        assert!(sample_initial_condition(&mut RngStream::new(0, 0), 8).is_err());
    }
}

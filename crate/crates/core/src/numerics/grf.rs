//! Gaussian random fields with a Matérn-like power spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft_nd, wavenumber, Direction};
use super::rng::RngStream;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Spectral density `S(k) ∝ (|k|^2 + tau^2)^(-d)` over integer wavenumbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    pub tau: f64,
    pub d: f64,
}

impl Default for GrfParams {
    fn default() -> Self {
        Self { tau: 3.0, d: 2.0 }
    }
}

impl GrfParams {
    pub fn density(&self, k_sq: f64) -> f64 {
        (k_sq + self.tau * self.tau).powf(-self.d)
    }
}

/// Samples a real periodic field on a 1-D or 2-D grid.
///
/// White noise is transformed, coloured by `sqrt(S(k))` and transformed back;
/// real input gives a Hermitian spectrum so the result is real. The output is
/// rescaled to unit empirical standard deviation.
pub fn grf_sample(rng: &mut RngStream, extents: &[usize], params: GrfParams) -> Result<Tensor> {
    let dim = extents.len();
    if !(1..=2).contains(&dim) || extents.iter().any(|&n| n == 0) {
        return Err(Error::Shape(format!(
            "random fields are 1-D or 2-D with nonzero extents, got {extents:?}"
        )));
    }
    if !(params.tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {}", params.tau)));
    }
    if !(params.d > dim as f64 / 2.0) {
        return Err(Error::Precondition(format!(
            "spectrum exponent d={} is not summable in {dim} dimensions",
            params.d
        )));
    }

    let total: usize = extents.iter().product();
    let mut buf: Vec<Complex64> = (0..total)
        .map(|_| Complex64::new(rng.gaussian(), 0.0))
        .collect();
    fft_nd(&mut buf, extents, Direction::Forward);
    for (flat, v) in buf.iter_mut().enumerate() {
        *v *= params.density(k_squared(flat, extents)).sqrt();
    }
    fft_nd(&mut buf, extents, Direction::Inverse);

    let mut field: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = field.iter().sum::<f64>() / total as f64;
    let var = field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / total as f64;
    if var > 0.0 {
        let inv = 1.0 / var.sqrt();
        for v in field.iter_mut() {
            *v *= inv;
        }
    }
    Tensor::from_finite(extents, field)
}

/// `|k|^2` for the bin at row-major position `flat`.
pub(crate) fn k_squared(flat: usize, extents: &[usize]) -> f64 {
    let mut rem = flat;
    let mut acc = 0.0;
    for &n in extents.iter().rev() {
        let k = wavenumber(rem % n, n) as f64;
        acc += k * k;
        rem /= n;
    }
    acc
}

//! Discrete Fourier transforms.
//!
//! Forward: `X_k = sum_n x_n exp(-2 pi i k n / N)`. Inverse carries the `1/N`
//! factor, so `inverse(forward(x)) == x`. Any length is supported; rustfft
//! picks radix-2/mixed-radix/Bluestein plans internally.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::tensor::{CTensor, Tensor};
use crate::error::{Error, Result};

/// Largest transform length accepted by [`dft`].
pub const MAX_DFT_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match direction {
            Direction::Forward => p.plan_fft_forward(len),
            Direction::Inverse => p.plan_fft_inverse(len),
        }
    })
}

/// One-dimensional DFT of a complex vector.
pub fn dft(x: &CTensor, direction: Direction) -> Result<CTensor> {
    if x.ndim() != 1 {
        return Err(Error::Shape(format!(
            "dft expects a 1-D tensor, got shape {:?}",
            x.shape()
        )));
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyInput("dft of a zero-length signal".into()));
    }
    if n > MAX_DFT_LEN {
        return Err(Error::Capacity(format!("dft length {n} exceeds {MAX_DFT_LEN}")));
    }
    let mut buf = x.data().to_vec();
    fft_nd(&mut buf, &[n], direction);
    CTensor::from_vec(&[n], buf)
}

/// One-dimensional DFT of a real vector.
pub fn dft_real(x: &Tensor, direction: Direction) -> Result<CTensor> {
    dft(&x.to_complex(), direction)
}

/// In-place multi-dimensional DFT over a row-major buffer with the given
/// extents. The inverse is normalized by the total number of points.
pub fn fft_nd(buf: &mut [Complex64], extents: &[usize], direction: Direction) {
    let total: usize = extents.iter().product();
    assert_eq!(buf.len(), total, "buffer does not match extents");
    if total == 0 {
        return;
    }
    let mut stride = 1usize;
    let mut line = Vec::new();
    for axis in (0..extents.len()).rev() {
        let n = extents[axis];
        if n > 1 {
            let fft = plan(n, direction);
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            if stride == 1 {
                for chunk in buf.chunks_exact_mut(n) {
                    fft.process_with_scratch(chunk, &mut scratch);
                }
            } else {
                line.resize(n, Complex64::default());
                let block = n * stride;
                for outer in 0..total / block {
                    let base = outer * block;
                    for inner in 0..stride {
                        for (j, v) in line.iter_mut().enumerate() {
                            *v = buf[base + j * stride + inner];
                        }
                        fft.process_with_scratch(&mut line, &mut scratch);
                        for (j, v) in line.iter().enumerate() {
                            buf[base + j * stride + inner] = *v;
                        }
                    }
                }
            }
        }
        stride *= n;
    }
    if direction == Direction::Inverse {
        let scale = 1.0 / total as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed integer wavenumber of bin `k` for a transform of length `n`.
pub fn wavenumber(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Direct O(N^2) evaluation of the forward sum.
    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ph = -2.0 * PI * (k * j % n) as f64 / n as f64;
                        v * Complex64::new(ph.cos(), ph.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / (1u64 << 53) as f64 - 0.5
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut x = vec![Complex64::default(); 8];
        x[0] = Complex64::new(1.0, 0.0);
        let y = dft(&CTensor::from_vec(&[8], x).unwrap(), Direction::Forward).unwrap();
        for v in y.data() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn sine_lands_in_two_bins() {
        let x: Vec<f64> = (0..16).map(|n| (2.0 * PI * n as f64 / 16.0).sin()).collect();
        let y = dft_real(&Tensor::from_vec(&[16], x.clone()).unwrap(), Direction::Forward).unwrap();
        let oracle = naive_dft(&x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        for (k, (a, b)) in y.data().iter().zip(&oracle).enumerate() {
            assert!((a - b).norm() < 1e-12);
            if k == 1 || k == 15 {
                assert!((a.norm() - 8.0).abs() < 1e-12);
            } else {
                assert!(a.norm() < 1e-12, "bin {k} = {a}");
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut s = 7u64;
        for n in [256usize, 100, 97] {
            let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(lcg(&mut s), lcg(&mut s))).collect();
            let t = CTensor::from_vec(&[n], x.clone()).unwrap();
            let back = dft(&dft(&t, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
            let err: f64 = back.data().iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let scale: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(err / scale < 1e-12);
        }
    }

    #[test]
    fn arbitrary_lengths_match_naive() {
        let mut s = 3u64;
        for n in [1usize, 2, 3, 12, 31, 64, 100] {
            let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(lcg(&mut s), lcg(&mut s))).collect();
            let y = dft(&CTensor::from_vec(&[n], x.clone()).unwrap(), Direction::Forward).unwrap();
            for (a, b) in y.data().iter().zip(naive_dft(&x)) {
                assert!((a - b).norm() < 1e-11 * n as f64);
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let t = CTensor::from_vec(&[0], vec![]).unwrap();
        assert!(matches!(dft(&t, Direction::Forward), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn two_dimensional_transform_is_separable() {
        let (a, b) = (4usize, 6usize);
        let mut s = 11u64;
        let x: Vec<Complex64> = (0..a * b).map(|_| Complex64::new(lcg(&mut s), 0.0)).collect();
        let mut y = x.clone();
        fft_nd(&mut y, &[a, b], Direction::Forward);
        for kx in 0..a {
            for ky in 0..b {
                let mut acc = Complex64::default();
                for nx in 0..a {
                    for ny in 0..b {
                        let ph = -2.0 * PI * ((kx * nx) as f64 / a as f64 + (ky * ny) as f64 / b as f64);
                        acc += x[nx * b + ny] * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                assert!((acc - y[kx * b + ky]).norm() < 1e-12);
            }
        }
        fft_nd(&mut y, &[a, b], Direction::Inverse);
        for (p, q) in y.iter().zip(&x) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn wavenumbers_are_signed() {
        assert_eq!(wavenumber(0, 8), 0);
        assert_eq!(wavenumber(4, 8), 4);
        assert_eq!(wavenumber(5, 8), -3);
        assert_eq!(wavenumber(7, 8), -1);
    }
}

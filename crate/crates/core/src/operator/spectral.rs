//! Fourier layer: truncated spectral multiplication plus a pointwise bypass.
//!
//! For input `z: [C_in, grid]` the layer computes
//!
//! ```text
//! X_m[c]  = DFT(z_c) at retained mode m
//! Y_m[o]  = sum_c W[c, o, m] X_m[c]
//! y[o, n] = (1/P) sum_m c_m Re(Y_m[o] e^{i phi_m(n)}) + sum_c B[o, c] z[c, n] + b[o]
//! ```
//!
//! where `P` is the number of grid points and `c_m` is 1 for modes on the
//! zero plane of the last axis and 2 otherwise (the conjugate half of the
//! spectrum is implied). This is exactly an inverse real FFT of the
//! truncated half-spectrum.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::fft::{fft_nd, Direction};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLayer {
    /// `[C_in, C_out, n_modes, 2]`, real and imaginary parts interleaved.
    pub weights: Tensor,
    /// `[C_out, C_in]` pointwise path.
    pub bypass: Tensor,
    /// `[C_out]`
    pub bias: Tensor,
    pub modes: usize,
    pub dims: usize,
}

/// Number of complex weights per channel pair for `modes` retained per axis.
pub fn mode_count(modes: usize, dims: usize) -> usize {
    match dims {
        1 => modes,
        // kx in [0, m) and [-m, 0), ky in [0, m)
        _ => 2 * modes * modes,
    }
}

/// Flat grid index and conjugate multiplicity of every retained mode.
pub(crate) fn mode_table(modes: usize, extents: &[usize]) -> Vec<(usize, f64)> {
    match extents {
        [_] => (0..modes)
            .map(|k| (k, if k == 0 { 1.0 } else { 2.0 }))
            .collect(),
        [n0, n1] => {
            let kxs: Vec<usize> = (0..modes).chain(n0 - modes..*n0).collect();
            let mut out = Vec::with_capacity(2 * modes * modes);
            for kx in kxs {
                for ky in 0..modes {
                    out.push((kx * n1 + ky, if ky == 0 { 1.0 } else { 2.0 }));
                }
            }
            out
        }
        _ => unreachable!("extents validated by caller"),
    }
}

/// Saved forward quantities needed by [`SpectralLayer::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    /// `[C_in][n_modes]` retained input coefficients.
    pub modes_in: Vec<Complex64>,
}

impl SpectralLayer {
    /// Complex Gaussian spectral weights scaled by `1/(C_in C_out)`; bypass and
    /// bias uniform on `±1/sqrt(C_in)`.
    pub fn init(rng: &mut RngStream, c_in: usize, c_out: usize, modes: usize, dims: usize) -> Self {
        let nm = mode_count(modes, dims);
        let scale = 1.0 / (c_in * c_out) as f64;
        let weights = (0..c_in * c_out * nm * 2).map(|_| scale * rng.gaussian()).collect();
        let bound = 1.0 / (c_in as f64).sqrt();
        let bypass = (0..c_out * c_in).map(|_| rng.uniform_range(-bound, bound)).collect();
        let bias = (0..c_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weights: Tensor::from_vec(&[c_in, c_out, nm, 2], weights).expect("shape"),
            bypass: Tensor::from_vec(&[c_out, c_in], bypass).expect("shape"),
            bias: Tensor::from_vec(&[c_out], bias).expect("shape"),
            modes,
            dims,
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, modes: usize, dims: usize) -> Self {
        let nm = mode_count(modes, dims);
        Self {
            weights: Tensor::zeros(&[c_in, c_out, nm, 2]),
            bypass: Tensor::zeros(&[c_out, c_in]),
            bias: Tensor::zeros(&[c_out]),
            modes,
            dims,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bypass.len() + self.bias.len()
    }

    pub fn check_grid(&self, extents: &[usize]) -> Result<()> {
        if extents.len() != self.dims {
            return Err(Error::Shape(format!(
                "{}-D layer applied to grid {extents:?}",
                self.dims
            )));
        }
        if self.modes == 0 {
            return Err(Error::Config("spectral layer needs at least one mode".into()));
        }
        if let Some(n) = extents.iter().find(|&&n| n < 2 * self.modes) {
            return Err(Error::Config(format!(
                "{} modes need at least {} points per axis, grid axis has {n}",
                self.modes,
                2 * self.modes
            )));
        }
        Ok(())
    }

    /// Returns the layer output `[C_out, P]` and the cache for backward.
    pub fn forward(&self, z: &[f64], extents: &[usize]) -> Result<(Vec<f64>, SpectralCache)> {
        self.check_grid(extents)?;
        let p: usize = extents.iter().product();
        let (ci, co) = (self.c_in(), self.c_out());
        if z.len() != ci * p {
            return Err(Error::Shape(format!(
                "spectral layer expects {ci} x {p} input, got {} values",
                z.len()
            )));
        }
        let table = mode_table(self.modes, extents);
        let nm = table.len();

        let mut modes_in = vec![Complex64::default(); ci * nm];
        let mut buf = vec![Complex64::default(); p];
        for c in 0..ci {
            for (b, &v) in buf.iter_mut().zip(&z[c * p..(c + 1) * p]) {
                *b = Complex64::new(v, 0.0);
            }
            fft_nd(&mut buf, extents, Direction::Forward);
            for (j, &(idx, _)) in table.iter().enumerate() {
                modes_in[c * nm + j] = buf[idx];
            }
        }

        let w = self.weights.data();
        let mut out = vec![0.0; co * p];
        for o in 0..co {
            buf.iter_mut().for_each(|b| *b = Complex64::default());
            for (j, &(idx, mult)) in table.iter().enumerate() {
                let mut acc = Complex64::default();
                for c in 0..ci {
                    let at = ((c * co + o) * nm + j) * 2;
                    acc += modes_in[c * nm + j] * Complex64::new(w[at], w[at + 1]);
                }
                buf[idx] = acc * mult;
            }
            fft_nd(&mut buf, extents, Direction::Inverse);
            let row = &mut out[o * p..(o + 1) * p];
            let bias = self.bias.data()[o];
            for (r, b) in row.iter_mut().zip(&buf) {
                *r = b.re + bias;
            }
            for c in 0..ci {
                let bw = self.bypass.data()[o * ci + c];
                for (r, x) in row.iter_mut().zip(&z[c * p..(c + 1) * p]) {
                    *r += bw * x;
                }
            }
        }
        Ok((out, SpectralCache { modes_in }))
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dz`.
    pub fn backward(
        &self,
        z: &[f64],
        cache: &SpectralCache,
        dy: &[f64],
        extents: &[usize],
        grad: &mut SpectralLayer,
    ) -> Vec<f64> {
        let p: usize = extents.iter().product();
        let (ci, co) = (self.c_in(), self.c_out());
        let table = mode_table(self.modes, extents);
        let nm = table.len();
        let inv_p = 1.0 / p as f64;

        let mut dz = vec![0.0; ci * p];
        // pointwise path
        for o in 0..co {
            let dyo = &dy[o * p..(o + 1) * p];
            grad.bias.data_mut()[o] += dyo.iter().sum::<f64>();
            for c in 0..ci {
                let zc = &z[c * p..(c + 1) * p];
                grad.bypass.data_mut()[o * ci + c] += dyo.iter().zip(zc).map(|(a, b)| a * b).sum::<f64>();
                let bw = self.bypass.data()[o * ci + c];
                for (d, g) in dz[c * p..(c + 1) * p].iter_mut().zip(dyo) {
                    *d += bw * g;
                }
            }
        }

        // dL/dY_m[o] = (c_m / P) DFT(dy_o)_m
        let mut dmodes_out = vec![Complex64::default(); co * nm];
        let mut buf = vec![Complex64::default(); p];
        for o in 0..co {
            for (b, &v) in buf.iter_mut().zip(&dy[o * p..(o + 1) * p]) {
                *b = Complex64::new(v, 0.0);
            }
            fft_nd(&mut buf, extents, Direction::Forward);
            for (j, &(idx, mult)) in table.iter().enumerate() {
                dmodes_out[o * nm + j] = buf[idx] * (mult * inv_p);
            }
        }

        let w = self.weights.data();
        let gw = grad.weights.data_mut();
        let mut dmodes_in = vec![Complex64::default(); ci * nm];
        for c in 0..ci {
            for o in 0..co {
                for j in 0..nm {
                    let at = ((c * co + o) * nm + j) * 2;
                    let dy_m = dmodes_out[o * nm + j];
                    let gwm = cache.modes_in[c * nm + j].conj() * dy_m;
                    gw[at] += gwm.re;
                    gw[at + 1] += gwm.im;
                    dmodes_in[c * nm + j] += Complex64::new(w[at], -w[at + 1]) * dy_m;
                }
            }
        }

        // dL/dz_n = Re(sum_m dX_m e^{i phi_m(n)}) = Re(P * IDFT(dX))
        for c in 0..ci {
            buf.iter_mut().for_each(|b| *b = Complex64::default());
            for (j, &(idx, _)) in table.iter().enumerate() {
                buf[idx] = dmodes_in[c * nm + j];
            }
            fft_nd(&mut buf, extents, Direction::Inverse);
            for (d, b) in dz[c * p..(c + 1) * p].iter_mut().zip(&buf) {
                *d += b.re * p as f64;
            }
        }
        dz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn random(rng: &mut RngStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gaussian()).collect()
    }

    /// Direct evaluation of the defining sums, no FFT.
    fn brute_force(layer: &SpectralLayer, z: &[f64], n: usize) -> Vec<f64> {
        let (ci, co) = (layer.c_in(), layer.c_out());
        let w = layer.weights.data();
        let mut out = vec![0.0; co * n];
        for o in 0..co {
            for x in 0..n {
                let mut acc = layer.bias.data()[o];
                for c in 0..ci {
                    acc += layer.bypass.data()[o * ci + c] * z[c * n + x];
                }
                for k in 0..layer.modes {
                    let mut y = Complex64::default();
                    for c in 0..ci {
                        let mut xk = Complex64::default();
                        for t in 0..n {
                            let ph = -2.0 * PI * (k * t) as f64 / n as f64;
                            xk += z[c * n + t] * Complex64::new(ph.cos(), ph.sin());
                        }
                        let at = ((c * co + o) * layer.modes + k) * 2;
                        y += xk * Complex64::new(w[at], w[at + 1]);
                    }
                    let ph = 2.0 * PI * (k * x) as f64 / n as f64;
                    let mult = if k == 0 { 1.0 } else { 2.0 };
                    acc += mult * (y * Complex64::new(ph.cos(), ph.sin())).re / n as f64;
                }
                out[o * n + x] = acc;
            }
        }
        out
    }

    #[test]
    fn pure_bypass_is_identity() {
        let mut layer = SpectralLayer::zeros(3, 3, 4, 1);
        for c in 0..3 {
            layer.bypass.data_mut()[c * 3 + c] = 1.0;
        }
        let mut rng = RngStream::new(1, 0);
        let z = random(&mut rng, 3 * 16);
        let (y, _) = layer.forward(&z, &[16]).unwrap();
        assert_eq!(y, z);
    }

    #[test]
    fn zero_mode_scales_the_mean() {
        let mut layer = SpectralLayer::zeros(1, 1, 2, 1);
        layer.weights.data_mut()[0] = 0.75; // W[0,0,k=0] = 0.75 + 0i
        let z = vec![2.0; 8];
        let (y, _) = layer.forward(&z, &[8]).unwrap();
        for v in y {
            assert!((v - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_brute_force_convolution() {
        let mut rng = RngStream::new(9, 0);
        let layer = SpectralLayer::init(&mut rng, 3, 2, 6, 1);
        let n = 64;
        let z = random(&mut rng, 3 * n);
        let (y, _) = layer.forward(&z, &[n]).unwrap();
        let oracle = brute_force(&layer, &z, n);
        let err = y.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-11, "{err}");
    }

    #[test]
    fn rejects_too_many_modes() {
        let layer = SpectralLayer::zeros(1, 1, 9, 1);
        assert!(matches!(layer.forward(&[0.0; 16], &[16]), Err(Error::Config(_))));
        let layer = SpectralLayer::zeros(1, 1, 4, 2);
        assert!(layer.forward(&[0.0; 64], &[8, 8]).is_ok());
        assert!(layer.forward(&[0.0; 48], &[8, 6]).is_err());
    }

    fn check_backward(extents: &[usize], modes: usize) {
        let mut rng = RngStream::new(31, extents.len() as u64);
        let (ci, co) = (2, 3);
        let p: usize = extents.iter().product();
        let layer = SpectralLayer::init(&mut rng, ci, co, modes, extents.len());
        let z = random(&mut rng, ci * p);
        let dy = random(&mut rng, co * p);
        let loss = |l: &SpectralLayer, z: &[f64]| -> f64 {
            l.forward(z, extents).unwrap().0.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer.forward(&z, extents).unwrap();
        let mut grad = SpectralLayer::zeros(ci, co, modes, extents.len());
        let dz = layer.backward(&z, &cache, &dy, extents, &mut grad);
        let h = 1e-6;
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss(&layer, &zp) - loss(&layer, &zm)) / (2.0 * h);
            assert!((fd - dz[i]).abs() < 1e-7 * (1.0 + fd.abs()), "dz[{i}] {fd} vs {}", dz[i]);
        }
        for i in 0..layer.weights.len() {
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            lp.weights.data_mut()[i] += h;
            lm.weights.data_mut()[i] -= h;
            let fd = (loss(&lp, &z) - loss(&lm, &z)) / (2.0 * h);
            let an = grad.weights.data()[i];
            assert!((fd - an).abs() < 1e-7 * (1.0 + fd.abs()), "w[{i}] {fd} vs {an}");
        }
    }

    #[test]
    fn backward_matches_finite_difference_1d() {
        check_backward(&[16], 4);
    }

    #[test]
    fn backward_matches_finite_difference_2d() {
        check_backward(&[8, 6], 3);
    }

    #[test]
    fn resolution_invariance_on_band_limited_input() {
        let mut rng = RngStream::new(5, 0);
        let layer = SpectralLayer::init(&mut rng, 2, 2, 8, 1);
        let f = |c: usize, x: f64| -> f64 {
            (1..6).map(|k| ((k + c) as f64 * 0.3).cos() * (k as f64 * x + c as f64).sin()).sum()
        };
        let eval = |n: usize| -> Vec<f64> {
            let z: Vec<f64> = (0..2)
                .flat_map(|c| (0..n).map(move |i| f(c, 2.0 * PI * i as f64 / n as f64)))
                .collect();
            layer.forward(&z, &[n]).unwrap().0
        };
        let coarse = eval(256);
        let fine = eval(512);
        for o in 0..2 {
            for i in 0..256 {
                assert!((coarse[o * 256 + i] - fine[o * 512 + 2 * i]).abs() <= 1e-8);
            }
        }
    }
}

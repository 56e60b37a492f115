//! Pointwise (1x1) affine maps and the GELU nonlinearity, with adjoints.

use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// `y[o, p] = sum_i W[o, i] x[i, p] + b[o]`, applied at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Affine {
    /// Uniform on `±1/sqrt(fan_in)` for weight and bias (Kaiming-uniform with
    /// the `a = sqrt(5)` gain used by common deep-learning frameworks).
    pub fn init(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        let bias = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Tensor::from_vec(&[fan_out, fan_in], weight).expect("shape"),
            bias: Tensor::from_vec(&[fan_out], bias).expect("shape"),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_out, fan_in]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `x` is `[in, points]` flattened; returns `[out, points]`.
    pub fn forward(&self, x: &[f64], points: usize) -> Vec<f64> {
        let (fo, fi) = (self.fan_out(), self.fan_in());
        debug_assert_eq!(x.len(), fi * points);
        let w = self.weight.data();
        let mut y = vec![0.0; fo * points];
        for o in 0..fo {
            let row = &mut y[o * points..(o + 1) * points];
            row.iter_mut().for_each(|v| *v = self.bias.data()[o]);
            for i in 0..fi {
                let wi = w[o * fi + i];
                for (yv, xv) in row.iter_mut().zip(&x[i * points..(i + 1) * points]) {
                    *yv += wi * xv;
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], points: usize, grad: &mut Affine) -> Vec<f64> {
        let (fo, fi) = (self.fan_out(), self.fan_in());
        let w = self.weight.data();
        let gw = grad.weight.data_mut();
        let mut dx = vec![0.0; fi * points];
        for o in 0..fo {
            let dyo = &dy[o * points..(o + 1) * points];
            grad.bias.data_mut()[o] += dyo.iter().sum::<f64>();
            for i in 0..fi {
                let xi = &x[i * points..(i + 1) * points];
                gw[o * fi + i] += dyo.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                let wi = w[o * fi + i];
                for (d, g) in dx[i * points..(i + 1) * points].iter_mut().zip(dyo) {
                    *d += wi * g;
                }
            }
        }
        dx
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// `d/dx gelu(x) = Phi(x) + x phi(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

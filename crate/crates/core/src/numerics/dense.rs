//! Small dense matrices and the matrix exponential.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [r, c] => Self::from_vec(*r, *c, t.data().to_vec()),
            s => Err(Error::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor::from_vec(&[self.rows, self.cols], self.data).expect("consistent shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        self.add(&other.scale(-1.0))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Largest dimension accepted by [`matrix_exp`].
pub const MAX_EXPM_DIM: usize = 512;

const TAYLOR_DEGREE: usize = 18;
const SCALED_NORM_TARGET: f64 = 0.5;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` so its 1-norm is at most 1/2; at that
/// radius the degree-18 remainder is below `0.5^19 / 19!`, far under
/// machine precision.
pub fn matrix_exp(a: &Mat) -> Result<Mat> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if a.rows > MAX_EXPM_DIM {
        return Err(Error::Capacity(format!(
            "dense exponential limited to {MAX_EXPM_DIM}x{MAX_EXPM_DIM}, got {}",
            a.rows
        )));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    let n = a.rows;
    let norm = a.norm_1();
    let squarings = if norm > SCALED_NORM_TARGET {
        (norm / SCALED_NORM_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let b = a.scale(0.5f64.powi(squarings));

    // Horner: I + B(I + B/2(I + B/3(... (I + B/m))))
    let eye = Mat::identity(n);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        acc = eye.add(&b.matmul(&acc).scale(1.0 / k as f64));
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    Ok(acc)
}

/// Tensor-level entry point for [`matrix_exp`].
pub fn matrix_exp_tensor(a: &Tensor) -> Result<Tensor> {
    Ok(matrix_exp(&Mat::from_tensor(a)?)?.into_tensor())
}

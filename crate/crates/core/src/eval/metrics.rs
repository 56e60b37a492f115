use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::fft::{fft_nd, wavenumber, Direction};
use crate::numerics::tensor::Tensor;

/// Spatial layout of the trailing axes of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Spacing along each spatial axis.
    pub spacing: Vec<f64>,
    /// Periodic fields are differentiated spectrally, others by central differences.
    pub periodic: bool,
}

impl Grid {
    pub fn periodic(spacing: &[f64]) -> Self {
        Self {
            spacing: spacing.to_vec(),
            periodic: true,
        }
    }

    pub fn bounded(spacing: &[f64]) -> Self {
        Self {
            spacing: spacing.to_vec(),
            periodic: false,
        }
    }

    /// Volume of one grid cell.
    pub fn cell(&self) -> f64 {
        self.spacing.iter().product()
    }
}

fn same_shape(u: &Tensor, u_hat: &Tensor) -> Result<()> {
    if u.shape() != u_hat.shape() {
        return Err(Error::Shape(format!("fields {:?} and {:?} differ", u.shape(), u_hat.shape())));
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("metric of an empty field".into()));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Mean of squared differences.
pub fn mse(u: &Tensor, u_hat: &Tensor) -> Result<f64> {
    same_shape(u, u_hat)?;
    Ok(sq_dist(u.data(), u_hat.data()) / u.len() as f64)
}

/// `||u - u_hat|| / ||u||`.
pub fn rel_l2(u: &Tensor, u_hat: &Tensor) -> Result<f64> {
    same_shape(u, u_hat)?;
    let den = sq_norm(u.data());
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative L2 error against a zero field".into()));
    }
    Ok((sq_dist(u.data(), u_hat.data()) / den).sqrt())
}

/// Partial derivatives of `u` along each spatial axis of `grid`; the leading
/// axes of `u` are treated as a batch.
pub fn gradient(u: &Tensor, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    let nd = grid.spacing.len();
    if nd == 0 || u.ndim() < nd {
        return Err(Error::Shape(format!("field {:?} has fewer than {nd} spatial axes", u.shape())));
    }
    let extents = &u.shape()[u.ndim() - nd..];
    let block: usize = extents.iter().product();
    let mut out = Vec::with_capacity(nd);
    for axis in 0..nd {
        let n = extents[axis];
        let stride: usize = extents[axis + 1..].iter().product();
        let h = grid.spacing[axis];
        let mut d = vec![0.0; u.len()];
        for (src, dst) in u.data().chunks_exact(block).zip(d.chunks_exact_mut(block)) {
            if grid.periodic {
                let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                fft_nd(&mut buf, extents, Direction::Forward);
                let scale = std::f64::consts::TAU / (n as f64 * h);
                for (flat, c) in buf.iter_mut().enumerate() {
                    let j = (flat / stride) % n;
                    let k = if n % 2 == 0 && j == n / 2 { 0.0 } else { wavenumber(j, n) as f64 };
                    *c *= Complex64::new(0.0, k * scale);
                }
                fft_nd(&mut buf, extents, Direction::Inverse);
                for (o, c) in dst.iter_mut().zip(&buf) {
                    *o = c.re;
                }
            } else {
                if n < 3 {
                    return Err(Error::Shape(format!("central differences need 3 points, axis has {n}")));
                }
                for (flat, o) in dst.iter_mut().enumerate() {
                    let j = (flat / stride) % n;
                    let at = |jj: usize| src[flat - j * stride + jj * stride];
                    *o = if j == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
                    } else if j == n - 1 {
                        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
                    } else {
                        (at(j + 1) - at(j - 1)) / (2.0 * h)
                    };
                }
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Relative error in the `H^1` norm with unit weight on the gradient term.
pub fn rel_h1(u: &Tensor, u_hat: &Tensor, grid: &Grid) -> Result<f64> {
    same_shape(u, u_hat)?;
    let gu = gradient(u, grid)?;
    let gh = gradient(u_hat, grid)?;
    let num = sq_dist(u.data(), u_hat.data()) + gu.iter().zip(&gh).map(|(a, b)| sq_dist(a, b)).sum::<f64>();
    let den = sq_norm(u.data()) + gu.iter().map(|a| sq_norm(a)).sum::<f64>();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative H1 error against a zero field".into()));
    }
    Ok((num / den).sqrt())
}

/// `sum u^2 * cell`.
pub fn energy(u: &Tensor, cell: f64) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::EmptyInput("energy of an empty field".into()));
    }
    Ok(sq_norm(u.data()) * cell)
}

/// Shannon entropy of the normalized power spectrum over the trailing
/// `spatial_dims` axes (leading axes are pooled).
pub fn spectral_entropy(u: &Tensor, spatial_dims: usize) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::EmptyInput("entropy of an empty field".into()));
    }
    if spatial_dims == 0 || u.ndim() < spatial_dims {
        return Err(Error::Shape(format!("field {:?} has fewer than {spatial_dims} axes", u.shape())));
    }
    let extents = &u.shape()[u.ndim() - spatial_dims..];
    let block: usize = extents.iter().product();
    let mut power = Vec::with_capacity(u.len());
    for src in u.data().chunks_exact(block) {
        let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, extents, Direction::Forward);
        power.extend(buf.iter().map(|c| c.norm_sqr()));
    }
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedMetric("spectral entropy of a zero field".into()));
    }
    Ok(power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum())
}

use crate::error::{Error, Result};
use crate::numerics::cg::{cg_solve, CgSolution};
use crate::numerics::tensor::Tensor;

/// Relative residual the Darcy solve is driven to.
pub const DARCY_TOL: f64 = 1e-10;

/// `-div(beta grad p) = f` on the unit square with `p = 0` on the boundary.
///
/// `f` holds the values at the `n0 x n1` interior nodes of a uniform grid
/// with spacing `1/(n0 + 1)` by `1/(n1 + 1)`. The five-point Laplacian
/// scaled by `beta` is solved by conjugate gradients.
pub fn solve_darcy(f: &Tensor, beta: f64) -> Result<(Tensor, CgSolution)> {
    let (n0, n1) = match f.shape() {
        [a, b] => (*a, *b),
        s => return Err(Error::Shape(format!("Darcy source must be 2-D, got {s:?}"))),
    };
    if n0 == 0 || n1 == 0 {
        return Err(Error::EmptyInput("Darcy grid".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("permeability must be positive, got {beta}")));
    }
    if !f.all_finite() {
        return Err(Error::NonFinite("Darcy source".into()));
    }
    let cx = beta * ((n0 + 1) as f64).powi(2);
    let cy = beta * ((n1 + 1) as f64).powi(2);
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n0 {
            for j in 0..n1 {
                let c = x[i * n1 + j];
                let up = if i > 0 { x[(i - 1) * n1 + j] } else { 0.0 };
                let down = if i + 1 < n0 { x[(i + 1) * n1 + j] } else { 0.0 };
                let left = if j > 0 { x[i * n1 + j - 1] } else { 0.0 };
                let right = if j + 1 < n1 { x[i * n1 + j + 1] } else { 0.0 };
                y[i * n1 + j] = cx * (2.0 * c - up - down) + cy * (2.0 * c - left - right);
            }
        }
    };
    let sol = cg_solve(apply, f.data(), DARCY_TOL, 20 * (n0 + n1) + 100)?;
    let p = Tensor::from_vec(&[n0, n1], sol.x.clone())?;
    Ok((p, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grf::{grf_sample, GrfParams};
    use crate::numerics::rng::RngStream;

    fn max_rel(a: &Tensor, b: &Tensor) -> f64 {
        let scale = b.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn zero_source_zero_pressure() {
        let (p, _) = solve_darcy(&Tensor::zeros(&[16, 16]), 0.1).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manufactured_solution() {
        // p = sin(pi x) sin(pi y) solves -lap p = 2 pi^2 p; second-order grid error
        let n = 63;
        let h = 1.0 / (n + 1) as f64;
        let pi = std::f64::consts::PI;
        let exact: Vec<f64> = (0..n * n)
            .map(|k| ((k / n + 1) as f64 * h * pi).sin() * ((k % n + 1) as f64 * h * pi).sin())
            .collect();
        let f = Tensor::from_vec(&[n, n], exact.iter().map(|v| 2.0 * pi * pi * v).collect()).unwrap();
        let (p, sol) = solve_darcy(&f, 1.0).unwrap();
        assert!(sol.relative_residual <= DARCY_TOL);
        let err = p.data().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn linear_and_scale_covariant() {
        let f = grf_sample(&mut RngStream::new(3, 0), &[128, 128], GrfParams::default()).unwrap();
        let f2 = Tensor::from_vec(&[128, 128], f.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let (unit, _) = solve_darcy(&f, 1.0).unwrap();
        for beta in [0.01, 0.1, 1.0] {
            let (p, sol) = solve_darcy(&f, beta).unwrap();
            assert!(sol.relative_residual <= DARCY_TOL);
            let (p2, _) = solve_darcy(&f2, beta).unwrap();
            let doubled = Tensor::from_vec(&[128, 128], p.data().iter().map(|v| 2.0 * v).collect()).unwrap();
            assert!(max_rel(&p2, &doubled) <= 1e-9);
            let scaled = Tensor::from_vec(&[128, 128], unit.data().iter().map(|v| v / beta).collect()).unwrap();
            assert!(max_rel(&p, &scaled) <= 1e-9, "beta {beta}: {}", max_rel(&p, &scaled));
        }
    }
}

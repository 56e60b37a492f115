//! Conjugate gradients for symmetric positive definite operators.

use super::tensor::{axpy, dot, norm2};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, recomputed from scratch at exit.
    pub relative_residual: f64,
}

/// Solves `A x = b` for SPD `A` given as a matrix-free callback
/// `apply(x, out)` writing `A x` into `out`.
///
/// Stops once the recursively updated residual satisfies the tolerance, then
/// confirms against the true residual; a drifted recurrence gets restarted
/// from the current iterate.
pub fn cg_solve<F>(mut apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(Error::Config(format!("cg tolerance must be positive, got {tol}")));
    }
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;

    while iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Precondition(format!(
                "operator is not positive definite (p^T A p = {pap:e})"
            )));
        }
        let step = rr / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        iterations += 1;

        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            // verify with the true residual
            apply(&x, &mut ap);
            for (ri, (bi, ai)) in r.iter_mut().zip(b.iter().zip(&ap)) {
                *ri = bi - ai;
            }
            let true_rr = dot(&r, &r);
            if true_rr.sqrt() <= tol * b_norm {
                return Ok(CgSolution {
                    x,
                    iterations,
                    relative_residual: true_rr.sqrt() / b_norm,
                });
            }
            p.copy_from_slice(&r);
            rr = true_rr;
            continue;
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }

    apply(&x, &mut ap);
    let res: f64 = b
        .iter()
        .zip(&ap)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    Err(Error::NonConvergence {
        iterations,
        residual: res / b_norm,
    })
}

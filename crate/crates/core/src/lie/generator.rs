use crate::error::{Error, Result};
use crate::numerics::dense::{matrix_exp, Mat, MAX_EXPM_DIM};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// Step size a freshly initialized generator starts with.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Low-rank skew-symmetric generator `A = U V^T - V U^T` with step size `alpha`.
///
/// `U` and `V` are `C x r`, row-major. `A` itself is never formed on the hot
/// path; see [`LowRankGenerator::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGenerator {
    pub u: Tensor,
    pub v: Tensor,
    pub alpha: f64,
}

impl LowRankGenerator {
    pub fn new(u: Tensor, v: Tensor, alpha: f64) -> Result<Self> {
        let (c, r) = match u.shape() {
            [c, r] => (*c, *r),
            s => return Err(Error::Shape(format!("U must be C x r, got {s:?}"))),
        };
        if v.shape() != u.shape() {
            return Err(Error::Shape(format!(
                "U {:?} and V {:?} must have the same shape",
                u.shape(),
                v.shape()
            )));
        }
        if r == 0 || r > c {
            return Err(Error::Config(format!("rank must satisfy 1 <= r <= C, got r={r}, C={c}")));
        }
        if !alpha.is_finite() || !u.all_finite() || !v.all_finite() {
            return Err(Error::NonFinite("generator parameters".into()));
        }
        Ok(Self { u, v, alpha })
    }

    /// `U`, `V` i.i.d. normal with standard deviation `1/sqrt(C)`.
    pub fn init(rng: &mut RngStream, channels: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > channels {
            return Err(Error::Config(format!(
                "rank must satisfy 1 <= r <= C, got r={rank}, C={channels}"
            )));
        }
        let std = 1.0 / (channels as f64).sqrt();
        let mut draw = || -> Vec<f64> { (0..channels * rank).map(|_| std * rng.gaussian()).collect() };
        let u = Tensor::from_vec(&[channels, rank], draw())?;
        let v = Tensor::from_vec(&[channels, rank], draw())?;
        Self::new(u, v, DEFAULT_ALPHA)
    }

    pub fn zeros(channels: usize, rank: usize) -> Self {
        Self {
            u: Tensor::zeros(&[channels, rank]),
            v: Tensor::zeros(&[channels, rank]),
            alpha: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn rank(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels() * self.rank() + 1
    }

    fn check_input(&self, z: &Tensor) -> Result<usize> {
        let c = self.channels();
        if z.ndim() < 1 || z.shape()[0] != c {
            return Err(Error::Shape(format!(
                "generator acts on {c} channels, input has shape {:?}",
                z.shape()
            )));
        }
        Ok(z.len() / c)
    }

    /// `A z = U (V^T z) - V (U^T z)` in `O(C r N)`.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        let n = self.check_input(z)?;
        let mut out = vec![0.0; z.len()];
        apply_low_rank(self.u.data(), self.v.data(), self.channels(), self.rank(), n, z.data(), &mut out);
        Tensor::from_vec(z.shape(), out)
    }

    /// Raw-slice form of [`apply`](Self::apply) for `z: C x n`.
    pub(crate) fn apply_into(&self, z: &[f64], n: usize, out: &mut [f64]) {
        apply_low_rank(self.u.data(), self.v.data(), self.channels(), self.rank(), n, z, out);
    }

    /// Linearized group action `z + alpha A z`.
    pub fn mcl_step(&self, z: &Tensor) -> Result<Tensor> {
        let az = self.apply(z)?;
        let mut out = z.clone();
        for (o, a) in out.data_mut().iter_mut().zip(az.data()) {
            *o += self.alpha * a;
        }
        Ok(out)
    }

    /// Dense `C x C` generator. `P - P^T` with `P = U V^T`, so the result is
    /// skew-symmetric bit for bit.
    pub fn materialize(&self) -> Mat {
        let c = self.channels();
        let u = Mat::from_vec(c, self.rank(), self.u.data().to_vec()).expect("shape checked");
        let v = Mat::from_vec(c, self.rank(), self.v.data().to_vec()).expect("shape checked");
        let p = u.matmul(&v.transpose());
        p.sub(&p.transpose())
    }

    /// Exact group action `exp(alpha A) z` through the dense exponential.
    /// Validation only; limited to `C <= 512`.
    pub fn exact_step(&self, z: &Tensor) -> Result<Tensor> {
        let c = self.channels();
        if c > MAX_EXPM_DIM {
            return Err(Error::Capacity(format!(
                "exact step materializes a {c}x{c} generator; limit is {MAX_EXPM_DIM}"
            )));
        }
        let n = self.check_input(z)?;
        let g = matrix_exp(&self.materialize().scale(self.alpha))?;
        let zm = Mat::from_vec(c, n, z.data().to_vec())?;
        Tensor::from_vec(z.shape(), g.matmul(&zm).data().to_vec())
    }
}

/// `out = U (V^T z) - V (U^T z)` for row-major `U, V: C x r` and `z: C x n`.
pub(crate) fn apply_low_rank(u: &[f64], v: &[f64], c: usize, r: usize, n: usize, z: &[f64], out: &mut [f64]) {
    let vz = project(v, c, r, n, z);
    let uz = project(u, c, r, n, z);
    // the two products are formed separately so U == V cancels exactly
    let mut second = vec![0.0; c * n];
    out.iter_mut().for_each(|o| *o = 0.0);
    expand_add(u, c, r, n, &vz, 1.0, out);
    expand_add(v, c, r, n, &uz, 1.0, &mut second);
    for (o, s) in out.iter_mut().zip(&second) {
        *o -= s;
    }
}

/// `B^T z` with `B: C x r`, `z: C x n`; result `r x n`.
pub(crate) fn project(b: &[f64], c: usize, r: usize, n: usize, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r * n];
    for ch in 0..c {
        let zrow = &z[ch * n..(ch + 1) * n];
        for k in 0..r {
            let w = b[ch * r + k];
            if w == 0.0 {
                continue;
            }
            let orow = &mut out[k * n..(k + 1) * n];
            for (o, x) in orow.iter_mut().zip(zrow) {
                *o += w * x;
            }
        }
    }
    out
}

/// `out += s * B y` with `B: C x r`, `y: r x n`.
pub(crate) fn expand_add(b: &[f64], c: usize, r: usize, n: usize, y: &[f64], s: f64, out: &mut [f64]) {
    for ch in 0..c {
        let orow = &mut out[ch * n..(ch + 1) * n];
        for k in 0..r {
            let w = s * b[ch * r + k];
            if w == 0.0 {
                continue;
            }
            for (o, x) in orow.iter_mut().zip(&y[k * n..(k + 1) * n]) {
                *o += w * x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example(alpha: f64) -> LowRankGenerator {
        let u = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
        let v = Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).unwrap();
        LowRankGenerator::new(u, v, alpha).unwrap()
    }

    fn random_tensor(rng: &mut RngStream, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).unwrap()
    }

    #[test]
    fn two_channel_worked_example() {
        let g = worked_example(0.1);
        let z = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(g.apply(&z).unwrap().data(), &[0.0, -1.0]);
        let dense = g.materialize();
        assert_eq!(dense.data(), &[0.0, 1.0, -1.0, 0.0]);
        let zp = g.mcl_step(&z).unwrap();
        assert_eq!(zp.data(), &[1.0, -0.1]);
        assert!((zp.norm().powi(2) - 1.01).abs() < 1e-15);
    }

    #[test]
    fn equal_bases_cancel() {
        let mut rng = RngStream::new(3, 0);
        let u = random_tensor(&mut rng, &[6, 2]);
        let g = LowRankGenerator::new(u.clone(), u, 0.5).unwrap();
        let z = random_tensor(&mut rng, &[6, 5]);
        assert!(g.apply(&z).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_dense_materialization() {
        let mut rng = RngStream::new(11, 0);
        let g = LowRankGenerator::init(&mut rng, 16, 4).unwrap();
        let z = random_tensor(&mut rng, &[16, 32]);
        let fast = g.apply(&z).unwrap();
        let dense = g.materialize().matmul(&Mat::from_vec(16, 32, z.data().to_vec()).unwrap());
        let err = fast.data().iter().zip(dense.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-13, "{err}");
    }

    #[test]
    fn zero_step_is_identity() {
        let mut rng = RngStream::new(5, 0);
        let mut g = LowRankGenerator::init(&mut rng, 8, 3).unwrap();
        g.alpha = 0.0;
        let z = random_tensor(&mut rng, &[8, 16]);
        assert_eq!(g.mcl_step(&z).unwrap(), z);
        let ex = g.exact_step(&z).unwrap();
        assert_eq!(ex, z);
    }

    #[test]
    fn materialized_generator_is_exactly_skew() {
        let mut rng = RngStream::new(21, 0);
        for c in [2usize, 9, 33, 64] {
            let g = LowRankGenerator::init(&mut rng, c, (c / 4).max(1)).unwrap();
            let a = g.materialize();
            let worst = a.add(&a.transpose()).data().iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-15 * a.frobenius());
        }
    }

    #[test]
    fn exact_step_preserves_column_norms() {
        let mut rng = RngStream::new(8, 0);
        let mut g = LowRankGenerator::init(&mut rng, 8, 2).unwrap();
        g.alpha = 0.7;
        let z = random_tensor(&mut rng, &[8, 16]);
        let out = g.exact_step(&z).unwrap();
        for col in 0..16 {
            let before: f64 = (0..8).map(|c| z.get(&[c, col]).powi(2)).sum::<f64>().sqrt();
            let after: f64 = (0..8).map(|c| out.get(&[c, col]).powi(2)).sum::<f64>().sqrt();
            assert!((before - after).abs() <= 1e-10 * before);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = worked_example(0.1);
        let z = Tensor::zeros(&[3, 4]);
        assert!(matches!(g.apply(&z), Err(Error::Shape(_))));
        assert!(LowRankGenerator::init(&mut RngStream::new(0, 0), 4, 5).is_err());
        assert!(LowRankGenerator::init(&mut RngStream::new(0, 0), 4, 0).is_err());
    }

    #[test]
    fn exact_path_has_a_capacity_limit() {
        let g = LowRankGenerator::zeros(513, 1);
        assert!(matches!(g.exact_step(&Tensor::zeros(&[513, 1])), Err(Error::Capacity(_))));
    }
}

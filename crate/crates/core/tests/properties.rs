use proptest::prelude::*;

use geoop::eval::{energy, rel_l2, round_sig, spectral_entropy};
use geoop::lie::{norm_drift, LowRankGenerator};
use geoop::numerics::{fft_nd, Direction, Mat, RngStream, Tensor};
use geoop::operator::downsample;
use geoop::train::cosine_lr;
use num_complex::Complex64;

fn gaussian(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = RngStream::new(seed, 0);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).unwrap()
}

fn generator(seed: u64, c: usize, r: usize, alpha: f64) -> LowRankGenerator {
    let mut g = LowRankGenerator::init(&mut RngStream::new(seed, 1), c, r).unwrap();
    g.alpha = alpha;
    g
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..40).prop_flat_map(|c| (Just(c), 1..=c.min(8)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn materialized_generator_is_skew((c, r) in dims(), seed in any::<u64>()) {
        let a = generator(seed, c, r, 1.0).materialize();
        let sum = a.add(&a.transpose());
        prop_assert!(sum.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn norm_drift_is_second_order((c, r) in dims(), seed in any::<u64>(), alpha in -2.0f64..2.0, n in 1usize..6) {
        let g = generator(seed, c, r, alpha);
        let z = gaussian(seed ^ 0x55, &[c, n]);
        let (lhs, rhs) = norm_drift(&g, &z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + z.norm().powi(2)));
        prop_assert!(lhs >= -1e-12 * (1.0 + z.norm().powi(2)));
    }

    #[test]
    fn low_rank_apply_matches_dense((c, r) in dims(), seed in any::<u64>(), n in 1usize..6) {
        let g = generator(seed, c, r, 1.0);
        let z = gaussian(seed.wrapping_add(1), &[c, n]);
        let fast = g.apply(&z).unwrap();
        let dense = g.materialize().matmul(&Mat::from_vec(c, n, z.data().to_vec()).unwrap());
        let scale = 1.0 + z.norm() * g.materialize().frobenius();
        for (a, b) in fast.data().iter().zip(dense.data()) {
            prop_assert!((a - b).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn generator_action_is_orthogonal_to_state((c, r) in dims(), seed in any::<u64>()) {
        let g = generator(seed, c, r, 1.0);
        let z = gaussian(seed ^ 0xAA, &[c, 1]);
        let az = g.apply(&z).unwrap();
        let inner: f64 = z.data().iter().zip(az.data()).map(|(a, b)| a * b).sum();
        prop_assert!(inner.abs() <= 1e-12 * (1.0 + z.norm() * az.norm()));
    }

    #[test]
    fn fft_round_trip(extents in prop::collection::vec(1usize..12, 1..4), seed in any::<u64>()) {
        let n: usize = extents.iter().product();
        let mut rng = RngStream::new(seed, 0);
        let orig: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gaussian(), rng.gaussian())).collect();
        let mut buf = orig.clone();
        fft_nd(&mut buf, &extents, Direction::Forward);
        fft_nd(&mut buf, &extents, Direction::Inverse);
        for (a, b) in buf.iter().zip(&orig) {
            prop_assert!((a - b).norm() <= 1e-12 * (n as f64).max(1.0));
        }
    }

    #[test]
    fn child_streams_are_pure(seed in any::<u64>(), id in any::<u64>()) {
        let root = RngStream::new(seed, 0);
        let mut a = root.child(id);
        let mut b = root.child(id);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rel_l2_is_scale_invariant(seed in any::<u64>(), n in 2usize..64, s in prop::sample::select(vec![-8.0, -0.5, 0.125, 3.0, 1e3])) {
        let u = gaussian(seed, &[n]);
        let v = gaussian(seed ^ 1, &[n]);
        let scaled = |t: &Tensor| Tensor::from_vec(t.shape(), t.data().iter().map(|x| s * x).collect()).unwrap();
        let base = rel_l2(&u, &v).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((rel_l2(&scaled(&u), &scaled(&v)).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn entropy_lies_between_zero_and_log_n(seed in any::<u64>(), n in 2usize..128) {
        let u = gaussian(seed, &[n]);
        let h = spectral_entropy(&u, 1).unwrap();
        prop_assert!(h >= -1e-12 && h <= (n as f64).ln() + 1e-12);
    }

    #[test]
    fn energy_is_quadratic(seed in any::<u64>(), n in 1usize..64, s in -10.0f64..10.0) {
        let u = gaussian(seed, &[n]);
        let su = Tensor::from_vec(&[n], u.data().iter().map(|x| s * x).collect()).unwrap();
        let e = energy(&u, 0.1).unwrap();
        prop_assert!((energy(&su, 0.1).unwrap() - s * s * e).abs() <= 1e-12 * (1.0 + s * s * e));
    }

    #[test]
    fn round_sig_is_idempotent_and_close(x in prop::num::f64::NORMAL) {
        let r = round_sig(x);
        prop_assert_eq!(round_sig(r), r);
        prop_assert!((r - x).abs() <= 5e-9 * x.abs());
    }

    #[test]
    fn cosine_schedule_is_monotone(total in 1usize..500, lr0 in 1e-5f64..1.0) {
        let mut prev = f64::INFINITY;
        for step in 0..=total {
            let lr = cosine_lr(step, total, lr0);
            prop_assert!(lr <= prev + 1e-15 && lr >= -1e-15 && lr <= lr0 + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn downsampling_keeps_every_kth_point(seed in any::<u64>(), k in 1usize..5, m in 1usize..16) {
        let n = k * m;
        let u = gaussian(seed, &[n]);
        let d = downsample(&u, k).unwrap();
        prop_assert_eq!(d.shape(), &[m]);
        for i in 0..m {
            prop_assert_eq!(d.data()[i], u.data()[i * k]);
        }
    }
}

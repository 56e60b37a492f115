//! Fast invariant suites shipped with the library, runnable from the CLI.
//!
//! Every oracle reads its reference constants from [`Constants`]; the
//! corrupted table shifts them slightly, which every suite must detect.

use std::f64::consts::{LN_2, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{growth_bound_check, neumann_inverse_apply, norm_drift, spectral_norm, LowRankGenerator};
use crate::numerics::{cg_solve, dft_real, fft_nd, matrix_exp, Direction, Mat, RngStream, Tensor};
use crate::operator::{AugmentationConfig, ModelConfig, OperatorModel, ParamCount};
use crate::pdegen::{
    generate_dataset, retardation, solve_advection, solve_burgers, solve_darcy, EquationKind, EquationSpec,
    SorptionParams, TrajectoryDataset,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Numerics,
    Lie,
    Pdegen,
    Operator,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Numerics, Suite::Lie, Suite::Pdegen, Suite::Operator];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Numerics => "numerics",
            Suite::Lie => "lie",
            Suite::Pdegen => "pdegen",
            Suite::Operator => "operator",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected numerics, lie, pdegen or operator")))
    }
}

/// Reference values the oracles compare against.
#[derive(Debug, Clone, Copy)]
pub struct Constants {
    pub tau: f64,
    pub ln_2: f64,
}

impl Constants {
    pub fn reference() -> Self {
        Self { tau: TAU, ln_2: LN_2 }
    }

    /// A table off by one part in a million.
    pub fn corrupted() -> Self {
        let c = Self::reference();
        Self {
            tau: c.tau * (1.0 + 1e-6),
            ln_2: c.ln_2 * (1.0 + 1e-6),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

type Check = fn(&Constants) -> std::result::Result<(), String>;

fn checks(suite: Suite) -> &'static [(&'static str, Check)] {
    match suite {
        Suite::Numerics => &[
            ("fft_round_trip", fft_round_trip),
            ("fft_single_mode", fft_single_mode),
            ("expm_rotation", expm_rotation),
            ("expm_orthogonal", expm_orthogonal),
            ("cg_laplacian", cg_laplacian),
            ("rng_streams", rng_streams),
        ],
        Suite::Lie => &[
            ("quarter_turn", quarter_turn),
            ("norm_drift_identity", norm_drift_identity),
            ("exact_step_isometry", exact_step_isometry),
            ("linearization_order", linearization_order),
            ("growth_bound", growth_bound),
            ("neumann_round_trip", neumann_round_trip),
        ],
        Suite::Pdegen => &[
            ("advection_shift", advection_shift),
            ("burgers_energy", burgers_energy),
            ("retardation_formula", retardation_formula),
            ("darcy_manufactured", darcy_manufactured),
            ("dataset_round_trip", dataset_round_trip),
        ],
        Suite::Operator => &[
            ("parameter_accounting", parameter_accounting),
            ("zero_generator_slot", zero_generator_slot),
            ("gradient_check", gradient_check),
            ("spectral_entropy_mode", spectral_entropy_mode),
        ],
    }
}

pub fn run_suite(suite: Suite, constants: &Constants) -> SuiteReport {
    let checks: Vec<CheckOutcome> = checks(suite)
        .iter()
        .map(|(name, check)| {
            let r = check(constants);
            CheckOutcome {
                name,
                passed: r.is_ok(),
                detail: r.err().unwrap_or_default(),
            }
        })
        .collect();
    let passed = checks.iter().filter(|c| c.passed).count();
    SuiteReport {
        suite,
        passed,
        failed: checks.len() - passed,
        checks,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gaussian_tensor(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).expect("shape")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fft_round_trip(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(1, 0);
    for extents in [vec![16usize], vec![45], vec![8, 12], vec![3, 5, 7]] {
        let n: usize = extents.iter().product();
        let orig: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gaussian(), rng.gaussian())).collect();
        let mut buf = orig.clone();
        fft_nd(&mut buf, &extents, Direction::Forward);
        fft_nd(&mut buf, &extents, Direction::Inverse);
        let e = buf.iter().zip(&orig).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ensure(e <= 1e-12, || format!("round trip on {extents:?} off by {e:e}"))?;
    }
    Ok(())
}

fn fft_single_mode(c: &Constants) -> std::result::Result<(), String> {
    let n = 64;
    let k = 5;
    let u = Tensor::from_vec(&[n], (0..n).map(|j| (c.tau * (k * j) as f64 / n as f64).cos()).collect()).map_err(err)?;
    let spec = dft_real(&u, Direction::Forward).map_err(err)?;
    for (m, z) in spec.data().iter().enumerate() {
        let want = if m == k || m == n - k { n as f64 / 2.0 } else { 0.0 };
        let e = (z - Complex64::new(want, 0.0)).norm();
        ensure(e <= 1e-10, || format!("bin {m} off by {e:e}"))?;
    }
    Ok(())
}

fn expm_rotation(c: &Constants) -> std::result::Result<(), String> {
    let theta = c.tau / 8.0;
    let a = Mat::from_vec(2, 2, vec![0.0, theta, -theta, 0.0]).map_err(err)?;
    let g = matrix_exp(&a).map_err(err)?;
    let (s, co) = (std::f64::consts::FRAC_PI_4.sin(), std::f64::consts::FRAC_PI_4.cos());
    let e = max_abs_diff(g.data(), &[co, s, -s, co]);
    ensure(e <= 1e-14, || format!("rotation entries off by {e:e}"))
}

fn expm_orthogonal(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(2, 0);
    for c in [3usize, 10, 24] {
        let b = Mat::from_vec(c, c, (0..c * c).map(|_| rng.gaussian()).collect()).map_err(err)?;
        let g = matrix_exp(&b.sub(&b.transpose())).map_err(err)?;
        let e = max_abs_diff(g.transpose().matmul(&g).data(), Mat::identity(c).data());
        ensure(e <= 1e-11, || format!("C={c}: G^T G deviates by {e:e}"))?;
    }
    Ok(())
}

fn cg_laplacian(_: &Constants) -> std::result::Result<(), String> {
    let n = 200;
    let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = 2.0 * x[i] - l - r;
        }
    };
    let sol = cg_solve(apply, &b, 1e-10, 10 * n).map_err(err)?;
    ensure(sol.relative_residual <= 1e-10, || format!("residual {:e}", sol.relative_residual))
}

fn rng_streams(_: &Constants) -> std::result::Result<(), String> {
    let root = RngStream::new(42, 0);
    let a: Vec<u64> = (0..8).map({
        let mut s = root.child(3);
        move |_| s.next_u64()
    }).collect();
    let b: Vec<u64> = (0..8).map({
        let mut s = root.child(3);
        move |_| s.next_u64()
    }).collect();
    let mut other = root.child(4);
    ensure(a == b, || "child streams are not reproducible".into())?;
    ensure(a[0] != other.next_u64(), || "sibling streams coincide".into())
}

fn quarter_turn(c: &Constants) -> std::result::Result<(), String> {
    let u = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).map_err(err)?;
    let v = Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).map_err(err)?;
    let g = LowRankGenerator::new(u, v, c.tau / 4.0).map_err(err)?;
    let z = Tensor::from_vec(&[2, 1], vec![1.0, 0.0]).map_err(err)?;
    let out = g.exact_step(&z).map_err(err)?;
    let e = max_abs_diff(out.data(), &[0.0, -1.0]);
    ensure(e <= 1e-12, || format!("quarter turn off by {e:e}"))
}

fn norm_drift_identity(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(3, 0);
    for i in 0..500 {
        let c = [2usize, 8, 32][i % 3];
        let r = [1usize, 3, 8][i % 3].min(c);
        let mut g = LowRankGenerator::init(&mut rng, c, r).map_err(err)?;
        g.alpha = rng.uniform_range(-1.0, 1.0);
        let z = gaussian_tensor(&mut rng, &[c, 4]);
        let (lhs, rhs) = norm_drift(&g, &z).map_err(err)?;
        let tol = 1e-10 * (1.0 + z.norm().powi(2));
        ensure((lhs - rhs).abs() <= tol, || format!("case {i}: drift {lhs:e} vs {rhs:e}"))?;
    }
    Ok(())
}

fn exact_step_isometry(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(4, 0);
    for i in 0..50 {
        let c = 2 + rng.below(31);
        let r = 1 + rng.below(c.min(8));
        let mut g = LowRankGenerator::init(&mut rng, c, r).map_err(err)?;
        g.alpha = rng.uniform_range(-2.0, 2.0);
        let z = gaussian_tensor(&mut rng, &[c, 3]);
        let out = g.exact_step(&z).map_err(err)?;
        for col in 0..3 {
            let before: f64 = (0..c).map(|k| z.get(&[k, col]).powi(2)).sum::<f64>().sqrt();
            let after: f64 = (0..c).map(|k| out.get(&[k, col]).powi(2)).sum::<f64>().sqrt();
            ensure((before - after).abs() <= 1e-10 * before.max(1.0), || {
                format!("case {i}: column {col} norm {before} -> {after}")
            })?;
        }
    }
    Ok(())
}

fn linearization_order(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(5, 0);
    let mut g = LowRankGenerator::init(&mut rng, 16, 4).map_err(err)?;
    let z = gaussian_tensor(&mut rng, &[16, 1]);
    let mut gaps = Vec::new();
    for alpha in [1e-1, 1e-2, 1e-3] {
        g.alpha = alpha;
        let lin = g.mcl_step(&z).map_err(err)?;
        let ex = g.exact_step(&z).map_err(err)?;
        let d: f64 = lin.data().iter().zip(ex.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        gaps.push(d);
    }
    let slope = (gaps[0].ln() - gaps[2].ln()) / (1e-1f64.ln() - 1e-3f64.ln());
    ensure((slope - 2.0).abs() <= 0.1, || format!("slope {slope}"))
}

fn growth_bound(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(6, 0);
    for i in 0..20 {
        let layers = 1 + rng.below(32);
        let gens: Vec<LowRankGenerator> = (0..layers)
            .map(|_| {
                let mut g = LowRankGenerator::init(&mut rng, 8, 2).expect("valid rank");
                g.alpha = rng.uniform_range(0.0, 0.3);
                g
            })
            .collect();
        let m = gens.iter().map(|g| spectral_norm(g, 200).sigma_max).fold(0.0, f64::max) * (1.0 + 1e-9);
        let z = gaussian_tensor(&mut rng, &[8, 2]);
        let chk = growth_bound_check(&gens, &z, m).map_err(err)?;
        ensure(chk.observed <= chk.bound * (1.0 + 1e-12), || {
            format!("stack {i}: growth {} exceeds bound {}", chk.observed, chk.bound)
        })?;
    }
    Ok(())
}

fn neumann_round_trip(_: &Constants) -> std::result::Result<(), String> {
    let mut rng = RngStream::new(7, 0);
    for i in 0..20 {
        let mut g = LowRankGenerator::init(&mut rng, 12, 3).map_err(err)?;
        let sigma = spectral_norm(&g, 500).sigma_max;
        g.alpha = rng.uniform_range(0.05, 0.9) / sigma;
        let z = gaussian_tensor(&mut rng, &[12, 2]);
        let y = g.mcl_step(&z).map_err(err)?;
        let sol = neumann_inverse_apply(&g, &y, 1e-13).map_err(err)?;
        let e = max_abs_diff(sol.x.data(), z.data());
        ensure(e <= 1e-10 * (1.0 + z.norm()), || format!("case {i}: recovered to {e:e}"))?;
        g.alpha = 1.0 / sigma;
        ensure(matches!(neumann_inverse_apply(&g, &y, 1e-13), Err(Error::DivergenceRisk(_))), || {
            format!("case {i}: gate accepted alpha ||A|| = 1")
        })?;
    }
    Ok(())
}

fn advection_shift(c: &Constants) -> std::result::Result<(), String> {
    let n = 64;
    let beta = 1.0;
    let t = 0.4;
    let profile = |x: f64| x.sin() + 0.5 * (3.0 * x).cos();
    let u0: Vec<f64> = (0..n).map(|j| profile(c.tau * j as f64 / n as f64)).collect();
    let traj = solve_advection(&Tensor::from_vec(&[n], u0).map_err(err)?, beta, t, 4).map_err(err)?;
    let exact: Vec<f64> = (0..n).map(|j| profile(TAU * j as f64 / n as f64 - beta * t)).collect();
    let last = &traj.data()[4 * n..];
    let rel = max_abs_diff(last, &exact) / exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
    ensure(rel <= 1e-6, || format!("relative error {rel:e}"))
}

fn burgers_energy(_: &Constants) -> std::result::Result<(), String> {
    let n = 64;
    let u0 = Tensor::from_vec(&[n], (0..n).map(|j| (TAU * j as f64 / n as f64).sin()).collect()).map_err(err)?;
    let traj = solve_burgers(&u0, 0.05, 0.5, 10, None).map_err(err)?;
    let energies: Vec<f64> = traj.data().chunks(n).map(|f| f.iter().map(|v| v * v).sum()).collect();
    ensure(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), || format!("energy rose: {energies:?}"))
}

fn retardation_formula(_: &Constants) -> std::result::Result<(), String> {
    let p = SorptionParams::default();
    for u in [0.01f64, 0.5, 1.0] {
        let want = 1.0 + (1.0 - p.phi) / p.phi * p.rho_s * p.k * p.n_f * u.powf(p.n_f - 1.0);
        let got = retardation(u, &p).map_err(err)?;
        ensure((got - want).abs() <= 1e-12 * want, || format!("R({u}) = {got}, expected {want}"))?;
    }
    Ok(())
}

fn darcy_manufactured(c: &Constants) -> std::result::Result<(), String> {
    let n = 31;
    let h = 1.0 / (n + 1) as f64;
    let half = c.tau / 2.0;
    let beta = 1.0;
    let mut f = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            f.set(&[i, j], 2.0 * half * half * (half * x).sin() * (half * y).sin() / beta);
        }
    }
    let (p, cg) = solve_darcy(&f, beta).map_err(err)?;
    ensure(cg.relative_residual <= 1e-10, || format!("cg residual {:e}", cg.relative_residual))?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            worst = worst.max((p.get(&[i, j]) - (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()).abs());
        }
    }
    // second-order discretization: pi^2 h^2 / 6 relative error at this size
    ensure(worst <= 3e-3, || format!("max error {worst:e}"))
}

fn dataset_round_trip(_: &Constants) -> std::result::Result<(), String> {
    let mut spec = EquationSpec::default_for(EquationKind::Burgers);
    spec.grid = vec![32];
    spec.n_steps = 4;
    spec.t_end = 0.1;
    spec.seed = 9;
    let ds = generate_dataset(&spec, 2, &[0.1, 0.01]).map_err(err)?;
    let bytes = ds.to_bytes().map_err(err)?;
    let back = TrajectoryDataset::from_bytes(&bytes).map_err(err)?;
    ensure(back.to_bytes().map_err(err)? == bytes, || "GNOD round trip changed bytes".into())?;
    let again = generate_dataset(&spec, 2, &[0.1, 0.01]).map_err(err)?;
    ensure(again.to_bytes().map_err(err)? == bytes, || "regeneration is not byte-identical".into())
}

fn small_config(aug: AugmentationConfig) -> ModelConfig {
    ModelConfig {
        width: 4,
        modes: 3,
        layers: 2,
        projection_hidden: 6,
        augmentation: aug,
        ..ModelConfig::default()
    }
}

fn parameter_accounting(_: &Constants) -> std::result::Result<(), String> {
    let cfg = ModelConfig {
        augmentation: AugmentationConfig::Mcl { rank: 8 },
        ..ModelConfig::default()
    };
    let base = ParamCount::for_config(&ModelConfig {
        augmentation: AugmentationConfig::None,
        ..cfg.clone()
    });
    let mcl = ParamCount::for_config(&cfg);
    let want = cfg.layers * (2 * cfg.width * 8 + 1);
    ensure(mcl.augmentation == want && mcl.total - base.total == want, || {
        format!("MCL overhead {} (total delta {}), expected {want}", mcl.augmentation, mcl.total - base.total)
    })?;
    let model = OperatorModel::init(cfg, 0).map_err(err)?;
    let counted: usize = model.parameters().iter().map(|(_, p)| p.len()).sum();
    ensure(counted == mcl.total, || format!("model holds {counted} parameters, accounting says {}", mcl.total))
}

fn zero_generator_slot(_: &Constants) -> std::result::Result<(), String> {
    let base = OperatorModel::init(small_config(AugmentationConfig::None), 3).map_err(err)?;
    let mut aug = OperatorModel::init(small_config(AugmentationConfig::Mcl { rank: 2 }), 3).map_err(err)?;
    for (name, p) in aug.parameters_mut() {
        if name.contains(".mcl.") {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut rng = RngStream::new(8, 0);
    let u = gaussian_tensor(&mut rng, &[1, 16]);
    let a = base.forward(&u, None).map_err(err)?;
    let b = aug.forward(&u, None).map_err(err)?;
    ensure(a == b, || "zero generator changed the forward pass".into())
}

fn gradient_check(_: &Constants) -> std::result::Result<(), String> {
    let mut model = OperatorModel::init(small_config(AugmentationConfig::Mcl { rank: 2 }), 5).map_err(err)?;
    for (name, p) in model.parameters_mut() {
        if name.ends_with("mcl.alpha") {
            p[0] = 0.3;
        }
    }
    let mut rng = RngStream::new(10, 0);
    let u = gaussian_tensor(&mut rng, &[1, 16]);
    let w = gaussian_tensor(&mut rng, &[1, 16]);
    let loss = |m: &OperatorModel| -> Result<f64> {
        let y = m.forward(&u, None)?;
        Ok(y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
    };
    let mut tape = crate::operator::GradientTape::new();
    model.forward(&u, Some(&mut tape)).map_err(err)?;
    let grads = model.backward(&tape, &w).map_err(err)?;
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let h = 1e-6;
    for name in names {
        let g = grads.get(&name).ok_or_else(|| format!("no gradient for {name}"))?.to_vec();
        // two entries per tensor keep the suite fast
        for idx in [0, g.len() - 1] {
            let shifted = |d: f64| -> Result<f64> {
                let mut m = model.clone();
                for (n, p) in m.parameters_mut() {
                    if n == name {
                        p[idx] += d;
                    }
                }
                loss(&m)
            };
            let fd = (shifted(h).map_err(err)? - shifted(-h).map_err(err)?) / (2.0 * h);
            let rel = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-4);
            ensure(rel <= 1e-5, || format!("{name}[{idx}]: analytic {} vs fd {fd}", g[idx]))?;
        }
    }
    Ok(())
}

fn spectral_entropy_mode(c: &Constants) -> std::result::Result<(), String> {
    let n = 32;
    let u = Tensor::from_vec(&[n], (0..n).map(|j| (3.0 * TAU * j as f64 / n as f64).sin()).collect()).map_err(err)?;
    let h = crate::eval::spectral_entropy(&u, 1).map_err(err)?;
    ensure((h - c.ln_2).abs() <= 1e-12, || format!("entropy {h}, expected {}", c.ln_2))
}

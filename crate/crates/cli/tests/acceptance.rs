//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `GEOOP_ACCEPTANCE=1,4,9` restricts the run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use geoop::eval::{evaluate, EvalConfig, EvalReport};
use geoop::lie::{growth_bound_check, neumann_inverse_apply, norm_drift, spectral_norm, LowRankGenerator};
use geoop::numerics::{grf_sample, GrfParams, RngStream, Tensor};
use geoop::operator::{AugmentationConfig, GradientTape, ModelConfig, OperatorModel, ParamCount};
use geoop::pdegen::{
    generate_dataset, sample_initial_condition, solve_advection, solve_burgers, solve_darcy,
    solve_diffusion_sorption, EquationKind, EquationSpec, SorptionSetup, TrajectoryDataset, DARCY_TOL,
};
use geoop::train::{mse_loss, train_loop, TrainConfig};
use geoop::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn norm_drift_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(101, 0);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for c in [2usize, 8, 32, 64] {
        for r in [1usize, 3, 8].into_iter().filter(|&r| r <= c) {
            for _ in 0..1000 {
                let mut g = LowRankGenerator::init(&mut rng, c, r).unwrap();
                g.alpha = rng.uniform_range(-2.0, 2.0);
                let scale = 10f64.powf(rng.uniform_range(-2.0, 2.0));
                let mut z = gaussian(&mut rng, &[c, 1]);
                z.data_mut().iter_mut().for_each(|v| *v *= scale);
                let (lhs, rhs) = norm_drift(&g, &z).unwrap();
                worst = worst.max((lhs - rhs).abs() / (1.0 + z.norm().powi(2)));
                cases += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        cases >= 10_000 && worst <= 1e-10 && t < Duration::from_secs(10),
        format!("{cases} cases, max |d|z|^2 - a^2|Az|^2| / (1+|z|^2) = {worst:.2e}, {}", secs(t)),
    )
}

fn exact_path_orthogonality() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(102, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = 2 + rng.below(63);
        let r = 1 + rng.below(c.min(8));
        let mut g = LowRankGenerator::init(&mut rng, c, r).unwrap();
        g.alpha = rng.uniform_range(-3.0, 3.0);
        let z = gaussian(&mut rng, &[c, 4]);
        let out = g.exact_step(&z).unwrap();
        for col in 0..4 {
            let before: f64 = (0..c).map(|k| z.get(&[k, col]).powi(2)).sum::<f64>().sqrt();
            let after: f64 = (0..c).map(|k| out.get(&[k, col]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((before - after).abs() / before);
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-10 && t < Duration::from_secs(30),
        format!("1000 cases (C <= 64), max relative column-norm change {worst:.2e}, {}", secs(t)),
    )
}

fn linearization_order() -> Outcome {
    let alphas = [1e-1, 1e-2, 1e-3];
    let mut slopes = Vec::new();
    let mut rng = RngStream::new(103, 0);
    for (c, r) in [(16usize, 4usize), (32, 8), (8, 1)] {
        let mut g = LowRankGenerator::init(&mut rng, c, r).unwrap();
        let z = gaussian(&mut rng, &[c, 1]);
        let pts: Vec<(f64, f64)> = alphas
            .iter()
            .map(|&a| {
                g.alpha = a;
                let lin = g.mcl_step(&z).unwrap();
                let ex = g.exact_step(&z).unwrap();
                let gap: f64 = lin.data().iter().zip(ex.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                (a.ln(), gap.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        slopes.push(slope);
    }
    outcome(
        slopes.iter().all(|s| (s - 2.0).abs() <= 0.1),
        format!("log-log slopes {:?}", slopes.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>()),
    )
}

fn growth_bound() -> Outcome {
    let mut rng = RngStream::new(104, 0);
    let mut worst_ratio: f64 = 0.0;
    let mut max_layers = 0;
    for _ in 0..1000 {
        let layers = 1 + rng.below(128);
        max_layers = max_layers.max(layers);
        let c = [4usize, 8, 16][rng.below(3)];
        let gens: Vec<LowRankGenerator> = (0..layers)
            .map(|_| {
                let r = 1 + rng.below(c.min(4));
                let mut g = LowRankGenerator::init(&mut rng, c, r).unwrap();
                g.alpha = rng.uniform_range(-0.5, 0.5);
                g
            })
            .collect();
        let m = gens.iter().map(|g| spectral_norm(g, 200).sigma_max).fold(0.0, f64::max);
        let z = gaussian(&mut rng, &[c, 1]);
        let chk = growth_bound_check(&gens, &z, m).unwrap();
        worst_ratio = worst_ratio.max(chk.observed / chk.bound);
    }
    outcome(
        worst_ratio <= 1.0,
        format!("1000 stacks (L up to {max_layers}), max observed/bound = {worst_ratio:.6}"),
    )
}

fn invertibility() -> Outcome {
    let mut rng = RngStream::new(105, 0);
    let mut worst: f64 = 0.0;
    let mut rejected = 0;
    let cases = 500;
    for _ in 0..cases {
        let c = 2 + rng.below(31);
        let r = 1 + rng.below(c.min(8));
        let mut g = LowRankGenerator::init(&mut rng, c, r).unwrap();
        let sigma = spectral_norm(&g, 1000).sigma_max;
        g.alpha = rng.uniform_range(0.01, 0.9) / sigma * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let z = gaussian(&mut rng, &[c, 3]);
        let y = g.mcl_step(&z).unwrap();
        let sol = neumann_inverse_apply(&g, &y, 1e-14).unwrap();
        let err = sol.x.data().iter().zip(z.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / z.norm().max(1.0));
        g.alpha = rng.uniform_range(1.0, 3.0) / sigma;
        if matches!(neumann_inverse_apply(&g, &y, 1e-14), Err(Error::DivergenceRisk(_))) {
            rejected += 1;
        }
    }
    outcome(
        worst <= 1e-10 && rejected == cases,
        format!("{cases} round trips at a|A| <= 0.9: max error {worst:.2e}; gate rejected {rejected}/{cases} at a|A| >= 1"),
    )
}

fn gradient_check_model(aug: AugmentationConfig) -> (f64, usize) {
    let cfg = ModelConfig {
        width: 8,
        modes: 4,
        augmentation: aug,
        ..ModelConfig::default()
    };
    let mut model = OperatorModel::init(cfg, 7).unwrap();
    for (name, p) in model.parameters_mut() {
        if name.ends_with("mcl.alpha") {
            p[0] = 0.25;
        }
    }
    let mut rng = RngStream::new(106, 0);
    let u = gaussian(&mut rng, &[1, 16]);
    let target = gaussian(&mut rng, &[1, 16]);
    let loss = |m: &OperatorModel| mse_loss(&m.forward(&u, None).unwrap(), &target).unwrap().0;
    let mut tape = GradientTape::new();
    let out = model.forward(&u, Some(&mut tape)).unwrap();
    let (_, dout) = mse_loss(&out, &target).unwrap();
    let grads = model.backward(&tape, &dout).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let names: Vec<(String, usize)> = model.parameters().into_iter().map(|(n, p)| (n, p.len())).collect();
    for (name, len) in names {
        let g = grads.get(&name).unwrap().to_vec();
        for i in 0..len {
            let nudge = |m: &mut OperatorModel, d: f64| {
                for (n, p) in m.parameters_mut() {
                    if n == name {
                        p[i] += d;
                    }
                }
            };
            nudge(&mut model, h);
            let lp = loss(&model);
            nudge(&mut model, -2.0 * h);
            let lm = loss(&model);
            nudge(&mut model, h);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-4);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (mcl, n1) = gradient_check_model(AugmentationConfig::Mcl { rank: 4 });
    let (mlp, n2) = gradient_check_model(AugmentationConfig::Mlp { hidden: 8 });
    let t = start.elapsed();
    outcome(
        mcl <= 1e-5 && mlp <= 1e-5 && t < Duration::from_secs(120),
        format!("MCL: {n1} entries, max rel err {mcl:.2e}; MLP: {n2} entries, max rel err {mlp:.2e}; {}", secs(t)),
    )
}

fn order(run: impl Fn(f64) -> Vec<f64>, dts: [f64; 3]) -> f64 {
    let (a, b, c) = (run(dts[0]), run(dts[1]), run(dts[2]));
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    (diff(&a, &b) / diff(&b, &c)).log2()
}

fn solver_oracles() -> Outcome {
    let n = 256;
    let x = |j: usize| std::f64::consts::TAU * j as f64 / n as f64;
    let profile = |s: f64| s.sin() + 0.4 * (3.0 * s).cos() - 0.2 * (7.0 * s).sin();
    let u0 = Tensor::from_vec(&[n], (0..n).map(|j| profile(x(j))).collect()).unwrap();
    let mut adv_worst: f64 = 0.0;
    for beta in [0.1, 1.0, 4.0] {
        let traj = solve_advection(&u0, beta, 1.0, 10).unwrap();
        let last = &traj.data()[10 * n..];
        let exact: Vec<f64> = (0..n).map(|j| profile(x(j) - beta)).collect();
        let num: f64 = last.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        adv_worst = adv_worst.max(num / den);
    }

    let ub = sample_initial_condition(&mut RngStream::new(6, 0), 128).unwrap();
    let burgers = order(|dt| solve_burgers(&ub, 0.1, 0.5, 1, Some(dt)).unwrap().data()[128..].to_vec(), [0.01, 0.005, 0.0025]);

    let m = 64;
    let us: Vec<f64> = (0..m).map(|i| 0.5 + 0.2 * (std::f64::consts::PI * (i as f64 + 0.5) / m as f64).cos()).collect();
    let us = Tensor::from_vec(&[m], us).unwrap();
    let sorption = order(
        |dt| {
            let setup = SorptionSetup {
                dt: Some(dt),
                ..Default::default()
            };
            solve_diffusion_sorption(&us, &setup, 8.0, 1).unwrap().data()[m..].to_vec()
        },
        [0.5, 0.25, 0.125],
    );

    let f = grf_sample(&mut RngStream::new(107, 0), &[64, 64], GrfParams::default()).unwrap();
    let (unit, sol) = solve_darcy(&f, 1.0).unwrap();
    let mut residual = sol.relative_residual;
    let max_rel = |a: &Tensor, b: &[f64]| {
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        a.data().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    };
    let mut identity: f64 = 0.0;
    for beta in [0.01, 0.1, 1.0] {
        let (p, s) = solve_darcy(&f, beta).unwrap();
        residual = residual.max(s.relative_residual);
        identity = identity.max(max_rel(&p, &unit.data().iter().map(|v| v / beta).collect::<Vec<_>>()));
        for k in [2.0, -3.0] {
            let fk = Tensor::from_vec(&[64, 64], f.data().iter().map(|v| k * v).collect()).unwrap();
            let (pk, _) = solve_darcy(&fk, beta).unwrap();
            identity = identity.max(max_rel(&pk, &p.data().iter().map(|v| k * v).collect::<Vec<_>>()));
        }
    }
    outcome(
        adv_worst <= 1e-6 && burgers >= 1.9 && sorption >= 1.9 && residual <= DARCY_TOL && identity <= 1e-9,
        format!(
            "advection rel_l2 {adv_worst:.2e}; orders burgers {burgers:.3}, diffusion-sorption {sorption:.3}; \
             darcy residual {residual:.2e}, scaling identities {identity:.2e}"
        ),
    )
}

struct DeskRun {
    seed: u64,
    rel_l2_25: [f64; 3],
    energy_gap: [f64; 3],
}

const SLOTS: [&str; 3] = ["baseline", "mcl", "mlp"];

fn desk_runs() -> (Vec<DeskRun>, Duration) {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in 0..3u64 {
        let dataset = |n: usize, s: u64| -> TrajectoryDataset {
            let mut spec = EquationSpec::default_for(EquationKind::Advection);
            spec.params.insert("beta".into(), 1.0);
            spec.grid = vec![256];
            spec.seed = s;
            generate_dataset(&spec, n, &[]).unwrap()
        };
        let train = dataset(100, 1000 + seed);
        let test = dataset(50, 2000 + seed);
        let mut rel = [0.0; 3];
        let mut gap = [0.0; 3];
        for (k, aug) in [
            AugmentationConfig::None,
            AugmentationConfig::Mcl { rank: 8 },
            AugmentationConfig::Mlp { hidden: 8 },
        ]
        .into_iter()
        .enumerate()
        {
            let cfg = TrainConfig {
                epochs: 50,
                seed,
                model: ModelConfig {
                    width: 32,
                    augmentation: aug,
                    ..ModelConfig::default()
                },
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let ck = train_loop(&train, &cfg).unwrap();
            let report: EvalReport = evaluate(
                &ck.model().unwrap(),
                &test,
                &EvalConfig {
                    horizon: 25,
                    steps: vec![25],
                    start_frame: 0,
                },
                serde_json::json!(null),
            )
            .unwrap();
            rel[k] = report.at_steps[0].rel_l2;
            gap[k] = report.energy_gap_mean;
            println!(
                "  seed {seed} {:<8} rel_l2@25 {:.6e}  energy gap {:.6e}  evaluated {}/{}  ({})",
                SLOTS[k],
                rel[k],
                gap[k],
                report.n_evaluated,
                report.n_samples,
                secs(t0.elapsed())
            );
        }
        runs.push(DeskRun {
            seed,
            rel_l2_25: rel,
            energy_gap: gap,
        });
    }
    (runs, start.elapsed())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn desk_reproduction(runs: &[DeskRun], elapsed: Duration) -> Outcome {
    let med: Vec<f64> = (0..3).map(|k| median(runs.iter().map(|r| r.rel_l2_25[k]).collect())).collect();
    outcome(
        med[1] <= med[0] && med[1] <= med[2] && elapsed <= Duration::from_secs(90 * 60),
        format!(
            "median rel_l2 at step 25: baseline {:.6e}, mcl {:.6e}, mlp {:.6e}; {}",
            med[0],
            med[1],
            med[2],
            secs(elapsed)
        ),
    )
}

fn parameter_accounting() -> Outcome {
    let cfg = ModelConfig {
        width: 32,
        layers: 4,
        augmentation: AugmentationConfig::Mcl { rank: 8 },
        ..ModelConfig::default()
    };
    let count = ParamCount::for_config(&cfg);
    let formula = cfg.layers * (2 * cfg.width * 8 + 1);
    let model = OperatorModel::init(cfg, 0).unwrap();
    let held: usize = model.parameters().iter().map(|(_, p)| p.len()).sum();
    outcome(
        count.augmentation == formula && formula == 2052 && held == count.total,
        format!(
            "MCL overhead {} (L(2Cr+1) = {formula}) of {} total, overhead fraction {:.4}%",
            count.augmentation,
            count.total,
            100.0 * count.overhead_fraction()
        ),
    )
}

fn energy_diagnostics(runs: &[DeskRun]) -> Outcome {
    let wins = runs.iter().filter(|r| r.energy_gap[1] < r.energy_gap[0]).count();
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: mcl {:.4e} vs baseline {:.4e}", r.seed, r.energy_gap[1], r.energy_gap[0]))
        .collect();
    outcome(wins >= 2, format!("MCL smaller energy gap in {wins}/3 seeds ({})", pairs.join("; ")))
}

fn run_pipeline(dir: &Path) -> Vec<Vec<u8>> {
    let bin = env!("CARGO_BIN_EXE_geoop");
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        "gen --equation advection --beta 1.0 --samples 6 --nx 64 --n-steps 20 --t-end 0.4 --seed 5 --out"
            .split(' ')
            .map(String::from)
            .chain([s("train.gnod")])
            .collect(),
        "gen --equation advection --beta 1.0 --samples 3 --nx 64 --n-steps 20 --t-end 0.4 --seed 6 --out"
            .split(' ')
            .map(String::from)
            .chain([s("test.gnod")])
            .collect(),
        "train --epochs 2 --width 8 --modes 8 --mcl --rank 4 --seed 9 --data"
            .split(' ')
            .map(String::from)
            .chain([s("train.gnod"), "--out".into(), s("model.gnoc")])
            .collect(),
        "eval --rollout 10 --steps 1,10 --checkpoint"
            .split(' ')
            .map(String::from)
            .chain([s("model.gnoc"), "--data".into(), s("test.gnod"), "--out".into(), s("report.json")])
            .collect(),
    ];
    for args in steps {
        let out = Command::new(bin).args(&args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    ["train.gnod", "test.gnod", "model.gnoc", "report.json", "report.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    let names = ["train GNOD", "test GNOD", "GNOC", "report JSON", "metrics CSV"];
    let differing: Vec<&str> = names.iter().zip(first.iter().zip(&second)).filter(|(_, (x, y))| x != y).map(|(n, _)| *n).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("gen -> train -> eval repeated in separate directories: {} artifacts byte-identical", names.len())
        } else {
            format!("artifacts differ: {differing:?}")
        },
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("GEOOP_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().map_or(true, |o| o.contains(&n));

    let mut desk: Option<(Vec<DeskRun>, Duration)> = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!("criterion {n:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "norm-drift identity", &mut norm_drift_identity);
    report(2, "exact-path orthogonality", &mut exact_path_orthogonality);
    report(3, "linearization order", &mut linearization_order);
    report(4, "multi-layer growth bound", &mut growth_bound);
    report(5, "invertibility", &mut invertibility);
    report(6, "gradient correctness", &mut gradient_correctness);
    report(7, "solver oracles", &mut solver_oracles);
    if wanted(8) || wanted(10) {
        println!("desk-scale runs (advection, 100 train / 50 test, N=256, width 32, 50 epochs, 3 seeds):");
        desk = Some(desk_runs());
    }
    report(8, "desk-scale directional reproduction", &mut || {
        let (runs, t) = desk.as_ref().unwrap();
        desk_reproduction(runs, *t)
    });
    report(9, "parameter accounting", &mut parameter_accounting);
    report(10, "energy diagnostics", &mut || energy_diagnostics(&desk.as_ref().unwrap().0));
    report(11, "determinism", &mut determinism);
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

mod config;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use config::{merge, require, DiagArgs, EvalArgs, GenArgs, TrainArgs};
use geoop::eval::{evaluate, EvalConfig, EvalReport};
use geoop::operator::{AugmentationConfig, ModelConfig};
use geoop::pdegen::{generate_dataset, EquationKind, EquationSpec, TrajectoryDataset};
use geoop::selftest::{run_suite, Constants, Suite};
use geoop::train::{train_session, Checkpoint, EpochRecord, TrainConfig, TrainSession};

#[derive(Parser)]
#[command(name = "geoop", version, about = "Neural operator surrogates with manifold-constrained layers")]
struct Cli {
    /// Worker threads for generation, training and evaluation (falls back to GEOOP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset.
    Gen(GenArgs),
    /// Train an operator model on a dataset.
    Train(TrainArgs),
    /// Roll a checkpoint out on a test dataset and score it.
    Eval(EvalArgs),
    /// Energy and spectral-entropy series for truth, baseline and MCL side by side.
    Diag(DiagArgs),
    /// Run the built-in invariant suites.
    Verify {
        /// Only run this suite (numerics, lie, pdegen, operator).
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// Failure that maps to the numerical exit code.
#[derive(Debug)]
struct NumericalFailure(String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<geoop::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Diag(a) => cmd_diag(a),
        Command::Verify { suite, inject_fault } => cmd_verify(suite.as_deref(), inject_fault),
    }
}

fn configure_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("GEOOP_THREADS") {
            Ok(v) => Some(v.trim().parse().with_context(|| format!("GEOOP_THREADS={v:?} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_dataset(path: &Path) -> anyhow::Result<TrajectoryDataset> {
    TrajectoryDataset::read(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn cmd_gen(flags: GenArgs) -> anyhow::Result<()> {
    let out = require(&flags.out, "out")?.to_path_buf();
    let mut a = merge(&flags, flags.config.as_deref())?;
    let kind: EquationKind = a.equation.as_deref().context("missing required flag --equation")?.parse()?;
    let mut spec = EquationSpec::default_for(kind);

    let sweeps = [("beta", &mut a.beta), ("nu", &mut a.nu), ("diffusivity", &mut a.diffusivity)];
    let wanted = match kind.sweep_param() {
        "D" => "diffusivity",
        p => p,
    };
    let mut sweep = Vec::new();
    for (name, values) in sweeps {
        if name == wanted {
            let v = values.get_or_insert_with(|| vec![spec.param(kind.sweep_param()).expect("default present")]);
            if v.is_empty() {
                bail!("--{name} needs at least one value");
            }
            sweep = v.clone();
        } else if values.is_some() {
            bail!("--{name} does not apply to {kind}");
        }
    }
    spec.params.insert(kind.sweep_param().to_string(), sweep[0]);

    let nx = *a.nx.get_or_insert(spec.grid[0]);
    spec.grid = if kind.spatial_dims() == 2 {
        vec![nx, *a.ny.get_or_insert(spec.grid[1])]
    } else {
        if a.ny.is_some() {
            bail!("--ny applies to darcy only");
        }
        vec![nx]
    };
    spec.t_end = *a.t_end.get_or_insert(spec.t_end);
    spec.n_steps = *a.n_steps.get_or_insert(spec.n_steps);
    spec.seed = *a.seed.get_or_insert(0);
    let samples = *a.samples.get_or_insert(1);
    a.equation = Some(kind.as_str().to_string());

    let mut ds = generate_dataset(&spec, samples, &sweep)?;
    ds.run_config = Some(json!({"command": "gen", "config": a}));
    let bytes = ds.to_bytes()?;
    write_file(&out, &bytes)?;
    println!("path: {}", out.display());
    println!("size: {} bytes", bytes.len());
    println!("sha256: {}", sha256_hex(&bytes));
    Ok(())
}

fn resolve_augmentation(a: &mut TrainArgs) -> anyhow::Result<AugmentationConfig> {
    let from_flags = match (a.mcl, a.mlp) {
        (true, true) => bail!("--mcl and --mlp are mutually exclusive"),
        (true, false) => Some("mcl"),
        (false, true) => Some("mlp"),
        (false, false) => None,
    };
    let kind = match (a.augment.as_deref(), from_flags) {
        (Some(x), Some(y)) if x != y => bail!("--augment {x} contradicts --{y}"),
        (Some(x), _) => x.to_string(),
        (None, Some(y)) => y.to_string(),
        (None, None) => "none".to_string(),
    };
    a.mcl = false;
    a.mlp = false;
    let aug = match kind.as_str() {
        "none" => {
            if a.rank.is_some() || a.mlp_hidden.is_some() {
                bail!("--rank and --mlp-hidden need an augmentation slot");
            }
            AugmentationConfig::None
        }
        "mcl" => {
            if a.mlp_hidden.is_some() {
                bail!("--mlp-hidden applies to the mlp slot");
            }
            AugmentationConfig::Mcl {
                rank: *a.rank.get_or_insert(8),
            }
        }
        "mlp" => {
            let hidden = a.mlp_hidden.or(a.rank).unwrap_or(8);
            a.rank = None;
            a.mlp_hidden = Some(hidden);
            AugmentationConfig::Mlp { hidden }
        }
        other => bail!("unknown augmentation {other:?}; expected none, mcl or mlp"),
    };
    a.augment = Some(kind);
    Ok(aug)
}

fn cmd_train(flags: TrainArgs) -> anyhow::Result<()> {
    let data = require(&flags.data, "data")?.to_path_buf();
    let out = require(&flags.out, "out")?.to_path_buf();
    let mut a = merge(&flags, flags.config.as_deref())?;
    let augmentation = resolve_augmentation(&mut a)?;
    let ds = read_dataset(&data)?;

    let d = TrainConfig::default();
    let dm = ModelConfig::default();
    let model = ModelConfig {
        in_channels: ds.channels(),
        out_channels: ds.channels(),
        width: *a.width.get_or_insert(dm.width),
        modes: *a.modes.get_or_insert(dm.modes),
        layers: *a.layers.get_or_insert(dm.layers),
        dims: ds.grid().len(),
        projection_hidden: *a.projection_hidden.get_or_insert(dm.projection_hidden),
        augmentation,
    };
    let cfg = TrainConfig {
        epochs: *a.epochs.get_or_insert(d.epochs),
        lr0: *a.lr.get_or_insert(d.lr0),
        batch: *a.batch.get_or_insert(d.batch),
        pushforward_t: *a.pushforward.get_or_insert(d.pushforward_t),
        random_depth: d.random_depth && !a.fixed_depth,
        seed: *a.seed.get_or_insert(d.seed),
        adam: d.adam,
        windows_per_sample: *a.windows.get_or_insert(d.windows_per_sample),
        val_fraction: *a.val_fraction.get_or_insert(d.val_fraction),
        model,
    };

    let resume = match &flags.resume {
        Some(p) => Some(read_checkpoint(p)?),
        None => None,
    };
    let mut log = |r: &EpochRecord| {
        eprintln!(
            "epoch {:>4}  train {:.6e}  val {:.6e}  lr {:.3e}",
            r.epoch, r.train_loss, r.val_loss, r.lr
        );
    };
    let session = TrainSession {
        resume: resume.as_ref(),
        stop_after: None,
        on_epoch: Some(&mut log),
    };
    let mut ck = train_session(&ds, &cfg, session)?;
    ck.meta.run_config = Some(json!({
        "command": "train",
        "config": a,
        "inputs": {"data_sha256": file_sha256(&data)?},
    }));
    let bytes = ck.to_bytes()?;
    write_file(&out, &bytes)?;
    println!("path: {}", out.display());
    println!("size: {} bytes", bytes.len());
    println!("sha256: {}", sha256_hex(&bytes));
    println!("best epoch {} (val loss {:.6e})", ck.meta.best_epoch, ck.meta.best_val_loss);
    Ok(())
}

fn check_compatible(ck: &Checkpoint, ds: &TrajectoryDataset, what: &Path) -> anyhow::Result<()> {
    let info = &ck.meta.dataset;
    if info.equation != ds.spec.kind || info.channels != ds.channels() || info.grid.len() != ds.grid().len() {
        bail!(
            "checkpoint {} was trained on {} {:?}x{}, dataset holds {} {:?}x{}",
            what.display(),
            info.equation,
            info.grid,
            info.channels,
            ds.spec.kind,
            ds.grid(),
            ds.channels()
        );
    }
    Ok(())
}

fn cmd_eval(flags: EvalArgs) -> anyhow::Result<()> {
    let ck_path = require(&flags.checkpoint, "checkpoint")?.to_path_buf();
    let data = require(&flags.data, "data")?.to_path_buf();
    let out = require(&flags.out, "out")?.to_path_buf();
    let csv = flags.csv.clone().unwrap_or_else(|| out.with_extension("csv"));
    let mut a = merge(&flags, flags.config.as_deref())?;
    let d = EvalConfig::default();
    let horizon = *a.rollout.get_or_insert(d.horizon);
    let cfg = EvalConfig {
        horizon,
        steps: a
            .steps
            .get_or_insert_with(|| d.steps.iter().copied().filter(|&s| s <= horizon).collect())
            .clone(),
        start_frame: *a.start_frame.get_or_insert(d.start_frame),
    };

    let ck = read_checkpoint(&ck_path)?;
    let ds = read_dataset(&data)?;
    check_compatible(&ck, &ds, &ck_path)?;
    let model = ck.model()?;
    let echo = json!({
        "command": "eval",
        "config": a,
        "inputs": {"checkpoint_sha256": file_sha256(&ck_path)?, "data_sha256": file_sha256(&data)?},
    });
    let report = evaluate(&model, &ds, &cfg, echo)?;
    write_file(&out, report.to_json()?.as_bytes())?;
    write_file(&csv, report.to_csv().as_bytes())?;
    print_summary(&report);
    Ok(())
}

fn print_summary(r: &EvalReport) {
    println!("evaluated {}/{} samples", r.n_evaluated, r.n_samples);
    for s in &r.at_steps {
        println!("step {:>4}  mse {:.6e}  rel_l2 {:.6e}  rel_h1 {:.6e}", s.step, s.mse, s.rel_l2, s.rel_h1);
    }
    println!("rollout rel_l2 mean {:.6e}  energy gap {:.6e}", r.rollout_rel_l2_mean, r.energy_gap_mean);
    for f in &r.failures {
        println!("sample {} failed: {}", f.sample, f.reason);
    }
}

fn cmd_diag(flags: DiagArgs) -> anyhow::Result<()> {
    let data = require(&flags.data, "data")?.to_path_buf();
    let baseline = require(&flags.baseline, "baseline")?.to_path_buf();
    let mcl = require(&flags.mcl, "mcl")?.to_path_buf();
    let out = require(&flags.out, "out")?.to_path_buf();
    let mut a = merge(&flags, flags.config.as_deref())?;
    let cfg = EvalConfig {
        horizon: *a.rollout.get_or_insert(EvalConfig::default().horizon),
        steps: Vec::new(),
        start_frame: *a.start_frame.get_or_insert(0),
    };
    let ds = read_dataset(&data)?;
    let mut reports = Vec::new();
    for path in [&baseline, &mcl] {
        let ck = read_checkpoint(path)?;
        check_compatible(&ck, &ds, path)?;
        reports.push(evaluate(&ck.model()?, &ds, &cfg, json!(null))?);
    }
    let (b, m) = (&reports[0].per_step, &reports[1].per_step);
    let mut csv = String::from("step,energy_true,energy_baseline,energy_mcl,entropy_true,entropy_baseline,entropy_mcl\n");
    for k in 0..cfg.horizon {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            k + 1,
            b.energy_true[k],
            b.energy_pred[k],
            m.energy_pred[k],
            b.entropy_true[k],
            b.entropy_pred[k],
            m.entropy_pred[k]
        ));
    }
    write_file(&out, csv.as_bytes())?;
    println!("path: {}", out.display());
    for (name, r) in ["baseline", "mcl"].iter().zip(&reports) {
        println!(
            "{name:<8}  energy gap {:.6e}  entropy gap {:.6e}  ({}/{} samples)",
            r.energy_gap_mean, r.entropy_gap_mean, r.n_evaluated, r.n_samples
        );
    }
    Ok(())
}

fn cmd_verify(suite: Option<&str>, inject_fault: bool) -> anyhow::Result<()> {
    let suites = match suite {
        Some(s) => vec![s.parse::<Suite>()?],
        None => Suite::ALL.to_vec(),
    };
    let constants = if inject_fault {
        Constants::corrupted()
    } else {
        Constants::reference()
    };
    let mut failed = 0;
    for s in suites {
        let r = run_suite(s, &constants);
        println!("{:<9} {} passed, {} failed", s.as_str(), r.passed, r.failed);
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("  FAIL {}: {}", c.name, c.detail);
        }
        failed += r.failed;
    }
    if failed > 0 {
        return Err(NumericalFailure(format!("{failed} check(s) failed")).into());
    }
    Ok(())
}


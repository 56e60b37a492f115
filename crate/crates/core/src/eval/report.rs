use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{energy, mse, rel_h1, rel_l2, spectral_entropy, Grid};
use super::rollout::{rollout, Surrogate};
use crate::error::{Error, Result};
use crate::pdegen::{EquationKind, TrajectoryDataset};

pub const REPORT_FORMAT: &str = "geoop-eval-report";
pub const REPORT_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "step,mse,rel_l2,rel_h1,energy_pred,energy_true,entropy_pred,entropy_true";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub horizon: usize,
    /// Steps singled out in the summary table.
    pub steps: Vec<usize>,
    /// Frame the rollout starts from.
    pub start_frame: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            steps: vec![1, 10, 25],
            start_frame: 0,
        }
    }
}

/// Sample-averaged series, one entry per rollout step `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerStep {
    pub step: Vec<usize>,
    pub mse: Vec<f64>,
    pub rel_l2: Vec<f64>,
    pub rel_h1: Vec<f64>,
    pub energy_pred: Vec<f64>,
    pub energy_true: Vec<f64>,
    pub entropy_pred: Vec<f64>,
    pub entropy_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMetrics {
    pub step: usize,
    pub mse: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFailure {
    pub sample: usize,
    pub step: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub config: serde_json::Value,
    pub equation: EquationKind,
    pub n_samples: usize,
    pub n_evaluated: usize,
    pub eval: EvalConfig,
    pub per_step: PerStep,
    pub at_steps: Vec<StepMetrics>,
    /// MSE averaged over every step of the rollout.
    pub rollout_mse: f64,
    /// Per-step relative L2 averaged over the rollout.
    pub rollout_rel_l2_mean: f64,
    /// `|E_pred - E_true|` averaged over steps and samples.
    pub energy_gap_mean: f64,
    /// `|H_pred - H_true|` averaged over steps and samples.
    pub entropy_gap_mean: f64,
    pub failures: Vec<SampleFailure>,
}

/// Rounds to 9 significant decimal digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Spatial layout used for metrics on `ds`.
pub fn grid_of(ds: &TrajectoryDataset) -> Grid {
    let spacing = vec![ds.dx; ds.grid().len()];
    match ds.spec.kind {
        EquationKind::Advection | EquationKind::Burgers => Grid::periodic(&spacing),
        EquationKind::DiffusionSorption | EquationKind::Darcy => Grid::bounded(&spacing),
    }
}

struct SampleSeries {
    mse: Vec<f64>,
    rel_l2: Vec<f64>,
    rel_h1: Vec<f64>,
    energy_pred: Vec<f64>,
    energy_true: Vec<f64>,
    entropy_pred: Vec<f64>,
    entropy_true: Vec<f64>,
}

fn evaluate_sample<S: Surrogate + ?Sized>(
    model: &S,
    ds: &TrajectoryDataset,
    s: usize,
    cfg: &EvalConfig,
    grid: &Grid,
) -> Result<SampleSeries> {
    let dims = grid.spacing.len();
    let preds = rollout(model, &ds.frame_tensor(s, cfg.start_frame), cfg.horizon)?;
    let mut out = SampleSeries {
        mse: Vec::new(),
        rel_l2: Vec::new(),
        rel_h1: Vec::new(),
        energy_pred: Vec::new(),
        energy_true: Vec::new(),
        entropy_pred: Vec::new(),
        entropy_true: Vec::new(),
    };
    for (k, pred) in preds.iter().enumerate() {
        let truth = ds.frame_tensor(s, cfg.start_frame + k + 1);
        out.mse.push(mse(&truth, pred)?);
        out.rel_l2.push(rel_l2(&truth, pred)?);
        out.rel_h1.push(rel_h1(&truth, pred, grid)?);
        out.energy_pred.push(energy(pred, grid.cell())?);
        out.energy_true.push(energy(&truth, grid.cell())?);
        // a collapsed (all-zero) prediction carries no spectrum; score it as 0
        let h = if pred.data().iter().all(|&v| v == 0.0) { 0.0 } else { spectral_entropy(pred, dims)? };
        out.entropy_pred.push(h);
        out.entropy_true.push(spectral_entropy(&truth, dims)?);
    }
    Ok(out)
}

fn mean_over(series: &[&SampleSeries], pick: impl Fn(&SampleSeries) -> &Vec<f64>, k: usize) -> f64 {
    series.iter().map(|s| pick(s)[k]).sum::<f64>() / series.len() as f64
}

/// Rolls the surrogate out from `start_frame` of every sample and averages
/// metrics over the samples that did not fail. Fails only if every sample does.
pub fn evaluate<S: Surrogate + ?Sized>(
    model: &S,
    ds: &TrajectoryDataset,
    cfg: &EvalConfig,
    config_echo: serde_json::Value,
) -> Result<EvalReport> {
    if cfg.horizon == 0 {
        return Err(Error::Config("rollout horizon must be at least 1".into()));
    }
    if cfg.start_frame + cfg.horizon >= ds.frames() {
        return Err(Error::Config(format!(
            "rollout from frame {} over {} steps needs {} frames, dataset has {}",
            cfg.start_frame,
            cfg.horizon,
            cfg.start_frame + cfg.horizon + 1,
            ds.frames()
        )));
    }
    if let Some(&bad) = cfg.steps.iter().find(|&&s| s == 0 || s > cfg.horizon) {
        return Err(Error::Config(format!("step {bad} lies outside 1..={}", cfg.horizon)));
    }
    let grid = grid_of(ds);
    let results: Vec<Result<SampleSeries>> = (0..ds.n_samples())
        .into_par_iter()
        .map(|s| evaluate_sample(model, ds, s, cfg, &grid))
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (sample, r) in results.into_iter().enumerate() {
        match r {
            Ok(series) => ok.push(series),
            Err(e) => {
                let step = match e {
                    Error::RolloutDiverged { step } => Some(step),
                    _ => None,
                };
                failures.push(SampleFailure {
                    sample,
                    step,
                    reason: e.to_string(),
                });
                first_error.get_or_insert(Error::Sample {
                    index: sample,
                    source: Box::new(e),
                });
            }
        }
    }
    if ok.is_empty() {
        return Err(first_error.expect("at least one sample"));
    }
    let refs: Vec<&SampleSeries> = ok.iter().collect();
    let h = cfg.horizon;
    let series = |pick: fn(&SampleSeries) -> &Vec<f64>| -> Vec<f64> { (0..h).map(|k| round_sig(mean_over(&refs, pick, k))).collect() };
    let per_step = PerStep {
        step: (1..=h).collect(),
        mse: series(|s| &s.mse),
        rel_l2: series(|s| &s.rel_l2),
        rel_h1: series(|s| &s.rel_h1),
        energy_pred: series(|s| &s.energy_pred),
        energy_true: series(|s| &s.energy_true),
        entropy_pred: series(|s| &s.entropy_pred),
        entropy_true: series(|s| &s.entropy_true),
    };
    let overall = |pick: fn(&SampleSeries) -> &Vec<f64>| -> f64 {
        (0..h).map(|k| mean_over(&refs, pick, k)).sum::<f64>() / h as f64
    };
    let gap = |a: fn(&SampleSeries) -> &Vec<f64>, b: fn(&SampleSeries) -> &Vec<f64>| -> f64 {
        refs.iter()
            .map(|s| a(s).iter().zip(b(s)).map(|(x, y)| (x - y).abs()).sum::<f64>() / h as f64)
            .sum::<f64>()
            / refs.len() as f64
    };
    let at_steps = cfg
        .steps
        .iter()
        .map(|&st| StepMetrics {
            step: st,
            mse: per_step.mse[st - 1],
            rel_l2: per_step.rel_l2[st - 1],
            rel_h1: per_step.rel_h1[st - 1],
        })
        .collect();
    let report = EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: config_echo,
        equation: ds.spec.kind,
        n_samples: ds.n_samples(),
        n_evaluated: ok.len(),
        eval: cfg.clone(),
        at_steps,
        rollout_mse: round_sig(overall(|s| &s.mse)),
        rollout_rel_l2_mean: round_sig(overall(|s| &s.rel_l2)),
        energy_gap_mean: round_sig(gap(|s| &s.energy_pred, |s| &s.energy_true)),
        entropy_gap_mean: round_sig(gap(|s| &s.entropy_pred, |s| &s.entropy_true)),
        per_step,
        failures,
    };
    report.check()?;
    Ok(report)
}

impl EvalReport {
    /// Structural invariants: known format, array lengths equal to the horizon,
    /// finite entries, summary steps inside the horizon.
    pub fn check(&self) -> Result<()> {
        if self.format != REPORT_FORMAT || self.version != REPORT_VERSION {
            return Err(Error::Format(format!("unknown report format {} v{}", self.format, self.version)));
        }
        let h = self.eval.horizon;
        let p = &self.per_step;
        if p.step != (1..=h).collect::<Vec<_>>() {
            return Err(Error::Format("per-step index must run 1..=horizon".into()));
        }
        let arrays = [
            &p.mse,
            &p.rel_l2,
            &p.rel_h1,
            &p.energy_pred,
            &p.energy_true,
            &p.entropy_pred,
            &p.entropy_true,
        ];
        if arrays.iter().any(|a| a.len() != h) {
            return Err(Error::Format("per-step arrays must match the horizon".into()));
        }
        let scalars = [self.rollout_mse, self.rollout_rel_l2_mean, self.energy_gap_mean, self.entropy_gap_mean];
        if arrays.iter().flat_map(|a| a.iter()).chain(scalars.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Format("report holds non-finite numbers".into()));
        }
        if self.at_steps.iter().any(|s| s.step == 0 || s.step > h) {
            return Err(Error::Format("summary step outside the horizon".into()));
        }
        if self.n_evaluated + self.failures.len() != self.n_samples {
            return Err(Error::Format("sample accounting does not add up".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-step table for plotting.
    pub fn to_csv(&self) -> String {
        let p = &self.per_step;
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for k in 0..p.step.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.step[k],
                p.mse[k],
                p.rel_l2[k],
                p.rel_h1[k],
                p.energy_pred[k],
                p.energy_true[k],
                p.entropy_pred[k],
                p.entropy_true[k]
            );
        }
        out
    }
}

/// Parses a report and checks it against the schema.
pub fn validate_report(json: &str) -> Result<EvalReport> {
    let report: EvalReport = serde_json::from_str(json)?;
    report.check()?;
    Ok(report)
}

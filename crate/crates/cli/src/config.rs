//! Flag structs doubling as JSON config files, and the merge between them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    /// JSON file with any of the flags below; flags given on the command line win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output GNOD file.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    /// advection, burgers, diffusion_sorption or darcy.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<String>,
    /// Advection speed (advection) or permeability (darcy); a list cycles over samples.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Viscosity for burgers; a list cycles over samples.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    /// Effective diffusivity for diffusion_sorption; a list cycles over samples.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusivity: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    /// Second grid extent (darcy only).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Stored frames after the initial one.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Training dataset (GNOD).
    #[arg(long)]
    #[serde(skip)]
    pub data: Option<PathBuf>,
    /// Output checkpoint (GNOC).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    #[serde(skip)]
    pub resume: Option<PathBuf>,

    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Initial learning rate (cosine-annealed).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Autoregressive steps per training window.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pushforward: Option<usize>,
    /// Always unroll the full pushforward horizon instead of a random depth.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub fixed_depth: bool,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_hidden: Option<usize>,
    /// none, mcl or mlp.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<String>,
    /// Shorthand for `--augment mcl`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub mcl: bool,
    /// Shorthand for `--augment mlp`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub mlp: bool,
    /// Generator rank r for the MCL slot.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Hidden width of the MLP slot; defaults to the rank, which roughly matches the MCL budget.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_hidden: Option<usize>,
    /// Random training windows drawn per sample each epoch.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
    /// Test dataset (GNOD).
    #[arg(long)]
    #[serde(skip)]
    pub data: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Per-step CSV; defaults to the report path with a .csv extension.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,

    /// Rollout horizon.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<usize>,
    /// Steps singled out in the summary.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_frame: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub data: Option<PathBuf>,
    /// Checkpoint without augmentation.
    #[arg(long)]
    #[serde(skip)]
    pub baseline: Option<PathBuf>,
    /// Checkpoint with the MCL slot.
    #[arg(long)]
    #[serde(skip)]
    pub mcl: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_frame: Option<usize>,
}

/// Parses `path` as `T` (rejecting unknown keys), then lays every flag set in
/// `flags` over it.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let file: T = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut merged = serde_json::to_value(file)?;
    let serde_json::Value::Object(over) = serde_json::to_value(flags)? else {
        bail!("flags did not serialize to an object");
    };
    let obj = merged.as_object_mut().context("config must be a JSON object")?;
    obj.extend(over);
    Ok(serde_json::from_value(merged)?)
}

pub fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => bail!("missing required flag --{flag}"),
    }
}

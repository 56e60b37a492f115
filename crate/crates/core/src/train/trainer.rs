use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamParams};
use super::checkpoint::{load_into, sections_of, Checkpoint, CheckpointMeta, DatasetInfo, EpochRecord, GNOC_VERSION};
use super::pushforward::{pushforward_loss, pushforward_step};
use super::schedule::cosine_lr;
use crate::error::{Error, Result};
use crate::lie::spectral_norm;
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;
use crate::operator::{ModelConfig, OperatorModel, ParameterGradients};
use crate::pdegen::TrajectoryDataset;

const SPLIT_STREAM: u64 = 0x5711;
const EPOCH_STREAM: u64 = 0xE90C;
const VAL_WINDOWS: usize = 4;
const NORM_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub batch: usize,
    pub pushforward_t: usize,
    /// Draw each window's unroll depth uniformly from `1..=pushforward_t`
    /// instead of always unrolling the full horizon.
    #[serde(default)]
    pub random_depth: bool,
    pub seed: u64,
    pub adam: AdamParams,
    /// Random windows drawn from every training sample per epoch.
    pub windows_per_sample: usize,
    /// Fraction of samples held out for best-checkpoint selection.
    pub val_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr0: 1e-3,
            batch: 16,
            pushforward_t: 5,
            random_depth: true,
            seed: 0,
            adam: AdamParams::default(),
            windows_per_sample: 4,
            val_fraction: 0.1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.pushforward_t == 0 {
            return Err(Error::Config("pushforward T must be at least 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr0)));
        }
        if self.batch == 0 || self.windows_per_sample == 0 {
            return Err(Error::Config("batch and windows_per_sample must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction)));
        }
        let AdamParams { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return Err(Error::Config("Adam needs 0 <= beta < 1 and eps > 0".into()));
        }
        self.model.validate()
    }
}

/// Optional controls for a training run.
#[derive(Default)]
pub struct TrainSession<'a> {
    /// Continue from this checkpoint (same config and dataset).
    pub resume: Option<&'a Checkpoint>,
    /// Stop once this many epochs are complete, leaving a resumable checkpoint.
    pub stop_after: Option<usize>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// `(train samples, validation samples)`, both ascending.
pub fn split_samples(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = if n >= 2 && val_fraction > 0.0 {
        ((val_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::new(seed, SPLIT_STREAM).shuffle(&mut perm);
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn window(ds: &TrajectoryDataset, sample: usize, start: usize, t: usize) -> Vec<Tensor> {
    (start..=start + t).map(|f| ds.frame_tensor(sample, f)).collect()
}

fn dataset_info(ds: &TrajectoryDataset) -> DatasetInfo {
    DatasetInfo {
        equation: ds.spec.kind,
        grid: ds.grid().to_vec(),
        channels: ds.channels(),
        dx: ds.dx,
        dt: ds.dt,
        seed: ds.spec.seed,
        n_samples: ds.n_samples(),
    }
}

fn check_compatible(ds: &TrajectoryDataset, cfg: &TrainConfig) -> Result<()> {
    let m = &cfg.model;
    if ds.channels() != m.in_channels || ds.channels() != m.out_channels {
        return Err(Error::Config(format!(
            "dataset has {} channels, model maps {} -> {}",
            ds.channels(),
            m.in_channels,
            m.out_channels
        )));
    }
    if ds.grid().len() != m.dims {
        return Err(Error::Config(format!(
            "dataset grid {:?} is {}-D, model is {}-D",
            ds.grid(),
            ds.grid().len(),
            m.dims
        )));
    }
    if ds.frames() < cfg.pushforward_t + 1 {
        return Err(Error::Config(format!(
            "pushforward T = {} needs {} frames, dataset has {}",
            cfg.pushforward_t,
            cfg.pushforward_t + 1,
            ds.frames()
        )));
    }
    if let Some(&n) = ds.grid().iter().find(|&&n| n < 2 * m.modes) {
        return Err(Error::Config(format!("grid extent {n} cannot hold {} modes", m.modes)));
    }
    Ok(())
}

fn generator_stats(model: &OperatorModel) -> (Vec<f64>, Vec<f64>) {
    model
        .generators()
        .into_iter()
        .map(|(_, g)| (spectral_norm(g, NORM_ITERS).sigma_max, g.alpha))
        .unzip()
}

/// Trains from scratch; see [`train_session`].
pub fn train_loop(ds: &TrajectoryDataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_session(ds, cfg, TrainSession::default())
}

/// Mini-batch Adam on pushforward windows with cosine annealing over
/// `epochs x steps_per_epoch` steps. Returns the best-by-validation
/// parameters together with the state needed to resume.
pub fn train_session(ds: &TrajectoryDataset, cfg: &TrainConfig, session: TrainSession<'_>) -> Result<Checkpoint> {
    cfg.validate()?;
    check_compatible(ds, cfg)?;
    let t = cfg.pushforward_t;
    let max_start = ds.frames() - 1 - t;
    let (train_ids, val_ids) = split_samples(ds.n_samples(), cfg.val_fraction, cfg.seed);
    let val_windows: Vec<(usize, usize)> = val_ids
        .iter()
        .flat_map(|&s| {
            let mut starts: Vec<usize> = (0..VAL_WINDOWS).map(|k| k * max_start / (VAL_WINDOWS - 1)).collect();
            starts.dedup();
            starts.into_iter().map(move |st| (s, st))
        })
        .collect();
    let per_epoch = train_ids.len() * cfg.windows_per_sample;
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch);
    let total_steps = cfg.epochs * steps_per_epoch;
    let info = dataset_info(ds);

    let fresh = OperatorModel::init(cfg.model.clone(), cfg.seed)?;
    let sizes: Vec<usize> = fresh.parameters().iter().map(|(_, p)| p.len()).collect();
    let (mut model, mut adam, mut meta, mut best) = match session.resume {
        None => (
            fresh,
            Adam::new(cfg.adam, &sizes),
            CheckpointMeta {
                format_version: GNOC_VERSION,
                train: cfg.clone(),
                dataset: info,
                history: Vec::new(),
                best_epoch: 0,
                best_val_loss: f64::INFINITY,
                epochs_done: 0,
                run_config: None,
            },
            Vec::new(),
        ),
        Some(ck) => {
            if ck.meta.train != *cfg || ck.meta.dataset != info {
                return Err(Error::Config("checkpoint was trained with a different config or dataset".into()));
            }
            let model = load_into(fresh.clone(), &ck.optimizer, "resume/")?;
            let mut adam = Adam::new(cfg.adam, &sizes);
            let names: Vec<String> = fresh.parameters().into_iter().map(|(n, _)| n).collect();
            for (k, name) in names.iter().enumerate() {
                let m = ck.optimizer_section(&format!("adam.m/{name}"));
                let v = ck.optimizer_section(&format!("adam.v/{name}"));
                match (m, v) {
                    (Some(m), Some(v)) if m.len() == sizes[k] && v.len() == sizes[k] => {
                        adam.m[k].copy_from_slice(m);
                        adam.v[k].copy_from_slice(v);
                    }
                    _ => return Err(Error::Format(format!("optimizer state for `{name}` missing or malformed"))),
                }
            }
            adam.step = match ck.optimizer_section("adam.step") {
                Some(&[s]) if s >= 0.0 && s.fract() == 0.0 => s as u64,
                _ => return Err(Error::Format("optimizer step counter missing".into())),
            };
            (model, adam, ck.meta.clone(), ck.params.clone())
        }
    };
    let stop = session.stop_after.unwrap_or(cfg.epochs).min(cfg.epochs);
    let mut on_epoch = session.on_epoch;

    for epoch in meta.epochs_done..stop {
        let mut rng = RngStream::new(cfg.seed, EPOCH_STREAM).child(epoch as u64);
        let mut windows: Vec<(usize, usize, usize)> = Vec::with_capacity(per_epoch);
        for &s in &train_ids {
            for _ in 0..cfg.windows_per_sample {
                let depth = if cfg.random_depth { 1 + rng.below(t) } else { t };
                windows.push((s, rng.below(ds.frames() - depth), depth));
            }
        }
        rng.shuffle(&mut windows);

        let mut loss_sum = 0.0;
        let mut lr = cfg.lr0;
        for chunk in windows.chunks(cfg.batch) {
            let outcomes: Vec<_> = chunk
                .par_iter()
                .map(|&(s, st, d)| pushforward_step(&model, &window(ds, s, st, d), d))
                .collect::<Result<_>>()?;
            let mut grads = ParameterGradients::zeros_for(&model);
            let mut batch_loss = 0.0;
            for o in &outcomes {
                grads.accumulate(&o.grads);
                batch_loss += o.loss;
            }
            let step = adam.step as usize;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::BlowUp {
                    step,
                    reason: format!("non-finite training loss in epoch {epoch}"),
                });
            }
            grads.scale(1.0 / chunk.len() as f64);
            loss_sum += batch_loss;
            lr = cosine_lr(step, total_steps, cfg.lr0);
            let grad_refs: Vec<&[f64]> = grads.entries.iter().map(|(_, g)| g.as_slice()).collect();
            let mut params = model.parameters_mut();
            let mut param_refs: Vec<&mut [f64]> = params.iter_mut().map(|(_, p)| &mut **p).collect();
            adam.step(&mut param_refs, &grad_refs, lr)?;
        }
        let train_loss = loss_sum / windows.len() as f64;

        let val_loss = if val_windows.is_empty() {
            train_loss
        } else {
            let losses: Vec<f64> = val_windows
                .par_iter()
                .map(|&(s, st)| pushforward_loss(&model, &window(ds, s, st, t), t))
                .collect::<Result<_>>()?;
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        if !val_loss.is_finite() {
            return Err(Error::BlowUp {
                step: adam.step as usize,
                reason: format!("non-finite validation loss in epoch {epoch}"),
            });
        }
        let (generator_norms, alphas) = generator_stats(&model);
        if val_loss < meta.best_val_loss {
            meta.best_val_loss = val_loss;
            meta.best_epoch = epoch;
            best = sections_of(&model, "");
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            generator_norms,
            alphas,
        };
        if let Some(cb) = on_epoch.as_mut() {
            cb(&record);
        }
        meta.history.push(record);
        meta.epochs_done = epoch + 1;
    }
    if best.is_empty() {
        return Err(Error::Config("no epochs were run".into()));
    }

    let mut optimizer = Vec::new();
    for ((name, _), (m, v)) in model.parameters().iter().zip(adam.m.iter().zip(&adam.v)) {
        optimizer.push((format!("adam.m/{name}"), m.clone()));
        optimizer.push((format!("adam.v/{name}"), v.clone()));
    }
    optimizer.push(("adam.step".into(), vec![adam.step as f64]));
    optimizer.extend(sections_of(&model, "resume/"));
    Ok(Checkpoint {
        meta,
        params: best,
        optimizer,
    })
}

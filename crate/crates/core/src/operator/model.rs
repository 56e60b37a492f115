use serde::{Deserialize, Serialize};

use super::dense::{gelu, gelu_grad, Affine};
use super::spectral::{mode_count, SpectralCache, SpectralLayer};
use crate::error::{Error, Result};
use crate::lie::{expand_add, project, LowRankGenerator};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::{dot, Tensor};

/// What follows the activation in each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentationConfig {
    None,
    /// `z + alpha A z` with a rank-`rank` skew generator.
    Mcl { rank: usize },
    /// Residual two-layer perceptron `z + W2 gelu(W1 z + b1) + b2`.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub modes: usize,
    pub layers: usize,
    /// Spatial dimension of the grid, 1 or 2.
    pub dims: usize,
    pub projection_hidden: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            out_channels: 1,
            width: 32,
            modes: 16,
            layers: 4,
            dims: 1,
            projection_hidden: 128,
            augmentation: AugmentationConfig::None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("width", self.width),
            ("modes", self.modes),
            ("layers", self.layers),
            ("projection_hidden", self.projection_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(1..=2).contains(&self.dims) {
            return Err(Error::Config(format!("dims must be 1 or 2, got {}", self.dims)));
        }
        match self.augmentation {
            AugmentationConfig::Mcl { rank } if rank == 0 || rank > self.width => Err(Error::Config(format!(
                "MCL rank must satisfy 1 <= r <= width ({}), got {rank}",
                self.width
            ))),
            AugmentationConfig::Mlp { hidden: 0 } => Err(Error::Config("MLP hidden width must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Augmentation {
    None,
    Mcl(LowRankGenerator),
    Mlp { first: Affine, second: Affine },
}

impl Augmentation {
    pub fn param_count(&self) -> usize {
        match self {
            Augmentation::None => 0,
            Augmentation::Mcl(g) => g.param_count(),
            Augmentation::Mlp { first, second } => first.param_count() + second.param_count(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::Mcl(_) => "mcl",
            Augmentation::Mlp { .. } => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBlock {
    pub spectral: SpectralLayer,
    pub augmentation: Augmentation,
}

/// Lift, `L` spectral blocks (spectral conv, GELU, augmentation slot) and a
/// two-stage projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorModel {
    pub config: ModelConfig,
    pub lift: Affine,
    pub blocks: Vec<OperatorBlock>,
    pub project_hidden: Affine,
    pub project_out: Affine,
}

/// Per-component parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub lift: usize,
    pub spectral: usize,
    pub augmentation: usize,
    pub projection: usize,
    pub total: usize,
}

impl ParamCount {
    /// Closed form for a configuration.
    pub fn for_config(cfg: &ModelConfig) -> ParamCount {
        let c = cfg.width;
        let lift = cfg.in_channels * c + c;
        // complex weights count as two reals; bypass; bias
        let spectral = cfg.layers * (2 * c * c * mode_count(cfg.modes, cfg.dims) + c * c + c);
        let augmentation = cfg.layers
            * match cfg.augmentation {
                AugmentationConfig::None => 0,
                AugmentationConfig::Mcl { rank } => 2 * c * rank + 1,
                AugmentationConfig::Mlp { hidden } => 2 * c * hidden + hidden + c,
            };
        let h = cfg.projection_hidden;
        let projection = (c * h + h) + (h * cfg.out_channels + cfg.out_channels);
        ParamCount {
            lift,
            spectral,
            augmentation,
            projection,
            total: lift + spectral + augmentation + projection,
        }
    }

    /// Augmentation parameters as a fraction of the un-augmented model.
    pub fn overhead_fraction(&self) -> f64 {
        self.augmentation as f64 / (self.total - self.augmentation) as f64
    }
}

// child-stream ids for initialization, one per component so models that differ
// only in augmentation share every other initial weight
const LIFT_STREAM: u64 = 1;
const SPECTRAL_STREAM: u64 = 1000;
const AUGMENT_STREAM: u64 = 2000;
const PROJECT_STREAM: u64 = 3000;

impl OperatorModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = RngStream::new(seed, 0);
        let c = config.width;
        let lift = Affine::init(&mut root.child(LIFT_STREAM), config.in_channels, c);
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers as u64 {
            let spectral = SpectralLayer::init(&mut root.child(SPECTRAL_STREAM + l), c, c, config.modes, config.dims);
            let mut rng = root.child(AUGMENT_STREAM + l);
            let augmentation = match config.augmentation {
                AugmentationConfig::None => Augmentation::None,
                AugmentationConfig::Mcl { rank } => Augmentation::Mcl(LowRankGenerator::init(&mut rng, c, rank)?),
                AugmentationConfig::Mlp { hidden } => Augmentation::Mlp {
                    first: Affine::init(&mut rng, c, hidden),
                    second: Affine::init(&mut rng, hidden, c),
                },
            };
            blocks.push(OperatorBlock { spectral, augmentation });
        }
        let project_hidden = Affine::init(&mut root.child(PROJECT_STREAM), c, config.projection_hidden);
        let project_out = Affine::init(&mut root.child(PROJECT_STREAM + 1), config.projection_hidden, config.out_channels);
        Ok(Self {
            config,
            lift,
            blocks,
            project_hidden,
            project_out,
        })
    }

    /// Same structure, every parameter zero. Used as the gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        for (_, p) in m.parameters_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    pub fn param_count(&self) -> ParamCount {
        let lift = self.lift.param_count();
        let spectral = self.blocks.iter().map(|b| b.spectral.param_count()).sum();
        let augmentation = self.blocks.iter().map(|b| b.augmentation.param_count()).sum();
        let projection = self.project_hidden.param_count() + self.project_out.param_count();
        ParamCount {
            lift,
            spectral,
            augmentation,
            projection,
            total: lift + spectral + augmentation + projection,
        }
    }

    /// Every trainable array with a stable name, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("lift.weight".into(), self.lift.weight.data()),
            ("lift.bias".into(), self.lift.bias.data()),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            out.push((format!("layers.{l}.spectral.weight"), b.spectral.weights.data()));
            out.push((format!("layers.{l}.spectral.bypass"), b.spectral.bypass.data()));
            out.push((format!("layers.{l}.spectral.bias"), b.spectral.bias.data()));
            match &b.augmentation {
                Augmentation::None => {}
                Augmentation::Mcl(g) => {
                    out.push((format!("layers.{l}.mcl.u"), g.u.data()));
                    out.push((format!("layers.{l}.mcl.v"), g.v.data()));
                    out.push((format!("layers.{l}.mcl.alpha"), std::slice::from_ref(&g.alpha)));
                }
                Augmentation::Mlp { first, second } => {
                    out.push((format!("layers.{l}.mlp.0.weight"), first.weight.data()));
                    out.push((format!("layers.{l}.mlp.0.bias"), first.bias.data()));
                    out.push((format!("layers.{l}.mlp.1.weight"), second.weight.data()));
                    out.push((format!("layers.{l}.mlp.1.bias"), second.bias.data()));
                }
            }
        }
        out.push(("project.0.weight".into(), self.project_hidden.weight.data()));
        out.push(("project.0.bias".into(), self.project_hidden.bias.data()));
        out.push(("project.1.weight".into(), self.project_out.weight.data()));
        out.push(("project.1.bias".into(), self.project_out.bias.data()));
        out
    }

    /// Mutable counterpart of [`parameters`](Self::parameters), same order.
    pub fn parameters_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("lift.weight".into(), self.lift.weight.data_mut()),
            ("lift.bias".into(), self.lift.bias.data_mut()),
        ];
        for (l, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("layers.{l}.spectral.weight"), b.spectral.weights.data_mut()));
            out.push((format!("layers.{l}.spectral.bypass"), b.spectral.bypass.data_mut()));
            out.push((format!("layers.{l}.spectral.bias"), b.spectral.bias.data_mut()));
            match &mut b.augmentation {
                Augmentation::None => {}
                Augmentation::Mcl(g) => {
                    out.push((format!("layers.{l}.mcl.u"), g.u.data_mut()));
                    out.push((format!("layers.{l}.mcl.v"), g.v.data_mut()));
                    out.push((format!("layers.{l}.mcl.alpha"), std::slice::from_mut(&mut g.alpha)));
                }
                Augmentation::Mlp { first, second } => {
                    let (fw, fb) = (first.weight.data_mut(), first.bias.data_mut());
                    out.push((format!("layers.{l}.mlp.0.weight"), fw));
                    out.push((format!("layers.{l}.mlp.0.bias"), fb));
                    let (sw, sb) = (second.weight.data_mut(), second.bias.data_mut());
                    out.push((format!("layers.{l}.mlp.1.weight"), sw));
                    out.push((format!("layers.{l}.mlp.1.bias"), sb));
                }
            }
        }
        out.push(("project.0.weight".into(), self.project_hidden.weight.data_mut()));
        out.push(("project.0.bias".into(), self.project_hidden.bias.data_mut()));
        out.push(("project.1.weight".into(), self.project_out.weight.data_mut()));
        out.push(("project.1.bias".into(), self.project_out.bias.data_mut()));
        out
    }

    /// The MCL generators, by layer index.
    pub fn generators(&self) -> Vec<(usize, &LowRankGenerator)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(l, b)| match &b.augmentation {
                Augmentation::Mcl(g) => Some((l, g)),
                _ => None,
            })
            .collect()
    }

    fn fingerprint(&self, extents: &[usize]) -> String {
        let kinds: Vec<&str> = self.blocks.iter().map(|b| b.augmentation.kind()).collect();
        format!(
            "in={} width={} out={} modes={} grid={:?} blocks={:?}",
            self.config.in_channels, self.config.width, self.config.out_channels, self.config.modes, extents, kinds
        )
    }

    fn grid_of(&self, u: &Tensor) -> Result<Vec<usize>> {
        let shape = u.shape();
        if shape.len() != self.config.dims + 1 || shape[0] != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects [{} channels, {}-D grid], got {:?}",
                self.config.in_channels, self.config.dims, shape
            )));
        }
        Ok(shape[1..].to_vec())
    }

    /// Forward pass on one sample `u: [C_in, grid...]`, returning `[C_out, grid...]`.
    /// When `tape` is given every intermediate needed by [`backward`](Self::backward)
    /// is recorded into it.
    pub fn forward(&self, u: &Tensor, tape: Option<&mut GradientTape>) -> Result<Tensor> {
        let extents = self.grid_of(u)?;
        let p: usize = extents.iter().product();
        let c = self.config.width;

        let mut z = self.lift.forward(u.data(), p);
        let mut records = Vec::with_capacity(self.blocks.len());
        let recording = tape.is_some();
        for block in &self.blocks {
            let (pre, cache) = block.spectral.forward(&z, &extents)?;
            let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
            let mut mlp_pre = None;
            let next = match &block.augmentation {
                Augmentation::None => act.clone(),
                Augmentation::Mcl(g) => {
                    let mut az = vec![0.0; act.len()];
                    g.apply_into(&act, p, &mut az);
                    act.iter().zip(&az).map(|(a, d)| a + g.alpha * d).collect()
                }
                Augmentation::Mlp { first, second } => {
                    let h = first.forward(&act, p);
                    let gh: Vec<f64> = h.iter().map(|&v| gelu(v)).collect();
                    let delta = second.forward(&gh, p);
                    mlp_pre = Some(h);
                    act.iter().zip(&delta).map(|(a, d)| a + d).collect()
                }
            };
            if recording {
                records.push(BlockRecord {
                    input: std::mem::take(&mut z),
                    cache,
                    pre,
                    act,
                    mlp_pre,
                });
            }
            z = next;
        }
        debug_assert_eq!(z.len(), c * p);
        let hidden_pre = self.project_hidden.forward(&z, p);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| gelu(v)).collect();
        let out = self.project_out.forward(&hidden, p);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model output".into()));
        }

        if let Some(t) = tape {
            *t = GradientTape {
                fingerprint: self.fingerprint(&extents),
                extents: extents.clone(),
                input: u.clone(),
                blocks: records,
                head_input: z,
                head_pre: hidden_pre,
                output: out.clone(),
            };
        }
        let mut shape = vec![self.config.out_channels];
        shape.extend_from_slice(&extents);
        Tensor::from_vec(&shape, out)
    }

    /// Reverse pass: exact gradients of every parameter given `dL/d(output)`.
    pub fn backward(&self, tape: &GradientTape, output_grad: &Tensor) -> Result<ParameterGradients> {
        if tape.fingerprint != self.fingerprint(&tape.extents) || tape.blocks.len() != self.blocks.len() {
            return Err(Error::Consistency(format!(
                "tape recorded for `{}`, model is `{}`",
                tape.fingerprint,
                self.fingerprint(&tape.extents)
            )));
        }
        if output_grad.len() != tape.output.len() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, output has {}",
                output_grad.len(),
                tape.output.len()
            )));
        }
        let p: usize = tape.extents.iter().product();
        let mut grad = self.zeros_like();

        let hidden: Vec<f64> = tape.head_pre.iter().map(|&v| gelu(v)).collect();
        let d_hidden = self.project_out.backward(&hidden, output_grad.data(), p, &mut grad.project_out);
        let d_hidden_pre: Vec<f64> = d_hidden.iter().zip(&tape.head_pre).map(|(d, &h)| d * gelu_grad(h)).collect();
        let mut dz = self.project_hidden.backward(&tape.head_input, &d_hidden_pre, p, &mut grad.project_hidden);

        for (l, (block, rec)) in self.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            // augmentation slot: dz is dL/dz_{l+1}; produce dL/d(act)
            let d_act = match (&block.augmentation, &mut grad.blocks[l].augmentation) {
                (Augmentation::None, _) => dz,
                (Augmentation::Mcl(g), Augmentation::Mcl(gg)) => mcl_backward(g, &rec.act, &dz, p, gg),
                (Augmentation::Mlp { first, second }, Augmentation::Mlp { first: g1, second: g2 }) => {
                    let h = rec.mlp_pre.as_ref().expect("recorded with MLP slot");
                    let gh: Vec<f64> = h.iter().map(|&v| gelu(v)).collect();
                    let d_gh = second.backward(&gh, &dz, p, g2);
                    let d_h: Vec<f64> = d_gh.iter().zip(h).map(|(d, &x)| d * gelu_grad(x)).collect();
                    let d_from_mlp = first.backward(&rec.act, &d_h, p, g1);
                    dz.iter().zip(&d_from_mlp).map(|(a, b)| a + b).collect()
                }
                _ => unreachable!("gradient model mirrors the model"),
            };
            let d_pre: Vec<f64> = d_act.iter().zip(&rec.pre).map(|(d, &s)| d * gelu_grad(s)).collect();
            dz = block
                .spectral
                .backward(&rec.input, &rec.cache, &d_pre, &tape.extents, &mut grad.blocks[l].spectral);
        }
        let _ = self.lift.backward(tape.input.data(), &dz, p, &mut grad.lift);
        Ok(ParameterGradients::from_model(&grad))
    }
}

/// Adjoint of `z+ = a + alpha A a`. Accumulates `dU, dV, dalpha` into `grad`
/// and returns `dL/da = g - alpha A g`.
fn mcl_backward(gen: &LowRankGenerator, act: &[f64], g: &[f64], p: usize, grad: &mut LowRankGenerator) -> Vec<f64> {
    let (c, r) = (gen.channels(), gen.rank());
    let (u, v) = (gen.u.data(), gen.v.data());
    let vt_act = project(v, c, r, p, act);
    let ut_act = project(u, c, r, p, act);
    let vt_g = project(v, c, r, p, g);
    let ut_g = project(u, c, r, p, g);

    let mut a_act = vec![0.0; act.len()];
    expand_add(u, c, r, p, &vt_act, 1.0, &mut a_act);
    expand_add(v, c, r, p, &ut_act, -1.0, &mut a_act);
    grad.alpha += dot(g, &a_act);

    // dL/dA = alpha g act^T;  dU = (G - G^T) V,  dV = -(G - G^T) U
    let du = outer_sum(g, &vt_act, act, &vt_g, c, r, p, gen.alpha);
    let dv = outer_sum(act, &ut_g, g, &ut_act, c, r, p, gen.alpha);
    for (d, s) in grad.u.data_mut().iter_mut().zip(&du) {
        *d += s;
    }
    for (d, s) in grad.v.data_mut().iter_mut().zip(&dv) {
        *d += s;
    }

    let mut d_act = g.to_vec();
    expand_add(u, c, r, p, &vt_g, -gen.alpha, &mut d_act);
    expand_add(v, c, r, p, &ut_g, gen.alpha, &mut d_act);
    d_act
}

/// `s * (x y^T - w q^T)` where `x, w: C x P` and `y, q: r x P` (contracted over points).
#[allow(clippy::too_many_arguments)]
fn outer_sum(x: &[f64], y: &[f64], w: &[f64], q: &[f64], c: usize, r: usize, p: usize, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; c * r];
    for ch in 0..c {
        let xr = &x[ch * p..(ch + 1) * p];
        let wr = &w[ch * p..(ch + 1) * p];
        for k in 0..r {
            let yr = &y[k * p..(k + 1) * p];
            let qr = &q[k * p..(k + 1) * p];
            out[ch * r + k] = s * (dot(xr, yr) - dot(wr, qr));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct BlockRecord {
    input: Vec<f64>,
    cache: SpectralCache,
    pre: Vec<f64>,
    act: Vec<f64>,
    mlp_pre: Option<Vec<f64>>,
}

/// Intermediates of one recorded forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    fingerprint: String,
    extents: Vec<usize>,
    input: Tensor,
    blocks: Vec<BlockRecord>,
    head_input: Vec<f64>,
    head_pre: Vec<f64>,
    output: Vec<f64>,
}

impl Default for GradientTape {
    fn default() -> Self {
        Self {
            fingerprint: String::new(),
            extents: Vec::new(),
            input: Tensor::zeros(&[0]),
            blocks: Vec::new(),
            head_input: Vec::new(),
            head_pre: Vec::new(),
            output: Vec::new(),
        }
    }
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.fingerprint.is_empty()
    }

    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Recorded output of block `l` (input to block `l + 1`, or to the head).
    pub fn layer_output(&self, l: usize) -> Option<&[f64]> {
        match l.cmp(&self.blocks.len().checked_sub(1)?) {
            std::cmp::Ordering::Less => Some(&self.blocks[l + 1].input),
            std::cmp::Ordering::Equal => Some(&self.head_input),
            std::cmp::Ordering::Greater => None,
        }
    }

    /// Recorded post-activation value of block `l`, i.e. the augmentation slot input.
    pub fn slot_input(&self, l: usize) -> Option<&[f64]> {
        self.blocks.get(l).map(|b| b.act.as_slice())
    }

    /// `(layer, slot input, slot output)` at each MCL slot, as recorded.
    pub fn mcl_activations(&self, model: &OperatorModel) -> Vec<(usize, Tensor, Tensor)> {
        let p: usize = self.extents.iter().product();
        let c = model.config.width;
        model
            .generators()
            .into_iter()
            .filter_map(|(l, _)| {
                let a = Tensor::from_vec(&[c, p], self.slot_input(l)?.to_vec()).ok()?;
                let post = Tensor::from_vec(&[c, p], self.layer_output(l)?.to_vec()).ok()?;
                Some((l, a, post))
            })
            .collect()
    }
}

/// Gradients keyed like [`OperatorModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients {
    pub entries: Vec<(String, Vec<f64>)>,
}

impl ParameterGradients {
    pub fn from_model(m: &OperatorModel) -> Self {
        Self {
            entries: m.parameters().into_iter().map(|(n, p)| (n, p.to_vec())).collect(),
        }
    }

    pub fn zeros_for(m: &OperatorModel) -> Self {
        Self {
            entries: m.parameters().into_iter().map(|(n, p)| (n, vec![0.0; p.len()])).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// `self += other`, entry by entry.
    pub fn accumulate(&mut self, other: &ParameterGradients) {
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, v) in self.entries.iter_mut() {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| dot(v, v)).sum::<f64>().sqrt()
    }
}

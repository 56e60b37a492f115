use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advection::solve_advection;
use super::burgers::solve_burgers;
use super::darcy::solve_darcy;
use super::ic::sample_initial_condition;
use super::sorption::{solve_diffusion_sorption, SorptionSetup};
use super::spec::{EquationKind, EquationSpec};
use crate::error::{Error, Result};
use crate::numerics::grf::{grf_sample, GrfParams};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

pub const GNOD_MAGIC: &[u8; 4] = b"GNOD";
pub const GNOD_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

/// Generated trajectories, laid out `[S, T, grid..., channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub data: Tensor,
    pub spec: EquationSpec,
    pub dx: f64,
    pub dt: f64,
    /// RNG stream id of every sample under the master seed.
    pub sample_streams: Vec<u64>,
    /// Value of the swept parameter used for every sample.
    pub sample_params: Vec<f64>,
    /// Resolved run configuration of the command that produced the file.
    pub run_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    equation: EquationKind,
    params: BTreeMap<String, f64>,
    sweep_param: String,
    sample_params: Vec<f64>,
    sample_streams: Vec<u64>,
    grid: Vec<usize>,
    n_steps: usize,
    t_end: f64,
    dx: f64,
    dt: f64,
    notes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<serde_json::Value>,
}

fn notes_for(kind: EquationKind) -> BTreeMap<String, String> {
    let mut notes = BTreeMap::new();
    let (ic, bc) = match kind {
        EquationKind::Advection | EquationKind::Burgers => (
            "sum of 8 random sinusoids, max |u0| = 1",
            "periodic on [0, 2pi)",
        ),
        EquationKind::DiffusionSorption => (
            "0.1 * (1 + s) with s a sum of 8 random sinusoids, max |s| = 1",
            "u(0) = 1; outflow u(1) = -D u_x(1)",
        ),
        EquationKind::Darcy => (
            "frame 0 is the Gaussian random field source f, frame 1 the pressure p",
            "p = 0 on the boundary of the unit square",
        ),
    };
    notes.insert("initial_condition".into(), ic.into());
    notes.insert("boundary".into(), bc.into());
    notes
}

impl TrajectoryDataset {
    pub fn n_samples(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn grid(&self) -> &[usize] {
        let s = self.data.shape();
        &s[2..s.len() - 1]
    }

    pub fn channels(&self) -> usize {
        *self.data.shape().last().expect("non-empty shape")
    }

    fn frame_len(&self) -> usize {
        self.grid().iter().product::<usize>() * self.channels()
    }

    /// Frame `t` of sample `s`, `[grid..., channels]` flattened.
    pub fn frame(&self, s: usize, t: usize) -> &[f64] {
        let len = self.frame_len();
        let start = (s * self.frames() + t) * len;
        &self.data.data()[start..start + len]
    }

    /// Frame `t` of sample `s` in the channel-first layout `[channels, grid...]`.
    pub fn frame_tensor(&self, s: usize, t: usize) -> Tensor {
        let c = self.channels();
        let src = self.frame(s, t);
        let points = src.len() / c;
        let mut data = vec![0.0; src.len()];
        for p in 0..points {
            for ch in 0..c {
                data[ch * points + p] = src[p * c + ch];
            }
        }
        let mut shape = vec![c];
        shape.extend_from_slice(self.grid());
        Tensor::from_vec(&shape, data).expect("shape")
    }

    fn metadata(&self) -> Metadata {
        Metadata {
            equation: self.spec.kind,
            params: self.spec.params.clone(),
            sweep_param: self.spec.kind.sweep_param().into(),
            sample_params: self.sample_params.clone(),
            sample_streams: self.sample_streams.clone(),
            grid: self.spec.grid.clone(),
            n_steps: self.spec.n_steps,
            t_end: self.spec.t_end,
            dx: self.dx,
            dt: self.dt,
            notes: notes_for(self.spec.kind),
            run_config: self.run_config.clone(),
        }
    }

    /// Serializes to the GNOD layout. Non-finite data is rejected.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.data.all_finite() {
            return Err(Error::NonFinite("dataset payload".into()));
        }
        let meta = serde_json::to_vec(&self.metadata())?;
        let shape = self.data.shape();
        let mut out = Vec::with_capacity(gnod_file_size(shape, meta.len()) as usize);
        out.extend_from_slice(GNOD_MAGIC);
        out.extend_from_slice(&GNOD_VERSION.to_le_bytes());
        out.push(DTYPE_F64);
        out.push(u8::try_from(shape.len()).map_err(|_| Error::Capacity("too many axes".into()))?);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.spec.seed.to_le_bytes());
        out.extend_from_slice(&u32::try_from(meta.len()).map_err(|_| Error::Capacity("metadata".into()))?.to_le_bytes());
        out.extend_from_slice(&meta);
        for v in self.data.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Format("truncated GNOD file".into()));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(4)? != GNOD_MAGIC {
            return Err(Error::Format("not a GNOD file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != GNOD_VERSION {
            return Err(Error::Format(format!("unsupported GNOD version {version}")));
        }
        let dtype = take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype code {dtype}")));
        }
        let ndim = take(1)?[0] as usize;
        if ndim < 3 {
            return Err(Error::Format(format!("dataset needs at least 3 axes, header says {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
            shape.push(usize::try_from(d).map_err(|_| Error::Format("axis too large".into()))?);
        }
        let seed = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let meta_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let meta: Metadata = serde_json::from_slice(take(meta_len)?)?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let payload = take(count.checked_mul(8).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
        if !cur.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after payload", cur.len())));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let data = Tensor::from_finite(&shape, values)?;
        let spec = EquationSpec {
            kind: meta.equation,
            params: meta.params,
            grid: meta.grid,
            t_end: meta.t_end,
            n_steps: meta.n_steps,
            seed,
        };
        spec.validate()?;
        if shape[1] != spec.frames() || shape[2..ndim - 1] != spec.grid[..] {
            return Err(Error::Format(format!("payload shape {shape:?} disagrees with metadata")));
        }
        if meta.sample_params.len() != shape[0] || meta.sample_streams.len() != shape[0] {
            return Err(Error::Format("per-sample metadata does not match the sample count".into()));
        }
        Ok(Self {
            data,
            spec,
            dx: meta.dx,
            dt: meta.dt,
            sample_streams: meta.sample_streams,
            sample_params: meta.sample_params,
            run_config: meta.run_config,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Payload size in bytes for float64 data of the given shape.
pub fn gnod_payload_bytes(shape: &[usize]) -> u64 {
    8 * shape.iter().map(|&d| d as u64).product::<u64>()
}

/// Total file size: fixed header, one u64 per axis, metadata and payload.
pub fn gnod_file_size(shape: &[usize], metadata_len: usize) -> u64 {
    (4 + 4 + 1 + 1 + 8 * shape.len() + 8 + 4 + metadata_len) as u64 + gnod_payload_bytes(shape)
}

fn solve_sample(spec: &EquationSpec, value: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let n = spec.grid[0];
    let traj = match spec.kind {
        EquationKind::Advection => {
            let u0 = sample_initial_condition(rng, n)?;
            solve_advection(&u0, value, spec.t_end, spec.n_steps)?
        }
        EquationKind::Burgers => {
            let u0 = sample_initial_condition(rng, n)?;
            solve_burgers(&u0, value, spec.t_end, spec.n_steps, None)?
        }
        EquationKind::DiffusionSorption => {
            let s = sample_initial_condition(rng, n.max(16))?;
            let u0 = Tensor::from_vec(&[n], s.data()[..n].iter().map(|v| 0.1 * (1.0 + v)).collect())?;
            let mut params = spec.sorption_params()?;
            params.d = value;
            let setup = SorptionSetup {
                params,
                ..Default::default()
            };
            solve_diffusion_sorption(&u0, &setup, spec.t_end, spec.n_steps)?
        }
        EquationKind::Darcy => {
            let f = grf_sample(rng, &spec.grid, GrfParams::default())?;
            let (p, _) = solve_darcy(&f, value)?;
            let mut frames = f.into_vec();
            frames.extend_from_slice(p.data());
            return Ok(frames);
        }
    };
    Ok(traj.into_vec())
}

/// Generates `n_samples` trajectories. When `sweep` is non-empty sample `i`
/// uses `sweep[i % sweep.len()]` for the equation's swept parameter; otherwise
/// the value in `spec.params` is used throughout.
pub fn generate_dataset(spec: &EquationSpec, n_samples: usize, sweep: &[f64]) -> Result<TrajectoryDataset> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let name = spec.kind.sweep_param();
    if let Some(bad) = sweep.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("sweep value for `{name}` must be positive, got {bad}")));
    }
    let base = spec.param(name)?;
    let values: Vec<f64> = (0..n_samples)
        .map(|i| if sweep.is_empty() { base } else { sweep[i % sweep.len()] })
        .collect();
    let root = RngStream::new(spec.seed, 0);
    let streams: Vec<RngStream> = (0..n_samples as u64).map(|i| root.child(i)).collect();

    let samples: Vec<Vec<f64>> = streams
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(index, (rng, &value))| {
            let mut rng = rng.clone();
            solve_sample(spec, value, &mut rng).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut shape = vec![n_samples, spec.frames()];
    shape.extend_from_slice(&spec.grid);
    shape.push(1);
    let data = Tensor::from_vec(&shape, samples.concat())?;
    if !data.all_finite() {
        return Err(Error::NonFinite("generated trajectories".into()));
    }
    Ok(TrajectoryDataset {
        data,
        spec: spec.clone(),
        dx: spec.dx(),
        dt: spec.dt(),
        sample_streams: streams.iter().map(|s| s.stream_id()).collect(),
        sample_params: values,
        run_config: None,
    })
}

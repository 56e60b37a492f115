use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::operator::OperatorModel;
use crate::pdegen::EquationKind;

pub const GNOC_MAGIC: &[u8; 4] = b"GNOC";
pub const GNOC_VERSION: u32 = 1;

/// What the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub equation: EquationKind,
    pub grid: Vec<usize>,
    pub channels: usize,
    pub dx: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    /// Power-iteration estimate of `||A||_2` for every MCL layer.
    pub generator_norms: Vec<f64>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub train: TrainConfig,
    pub dataset: DatasetInfo,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Epochs completed; training resumes at this index.
    pub epochs_done: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

pub type Section = (String, Vec<f64>);

/// Best parameters plus everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Section>,
    pub optimizer: Vec<Section>,
}

impl Checkpoint {
    /// Rebuilds the best model. Section names and sizes must match the
    /// architecture in the stored config exactly.
    pub fn model(&self) -> Result<OperatorModel> {
        load_into(OperatorModel::init(self.meta.train.model.clone(), 0)?, &self.params, "")
    }

    pub fn optimizer_section(&self, name: &str) -> Option<&[f64]> {
        self.optimizer.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(GNOC_MAGIC);
        out.extend_from_slice(&GNOC_VERSION.to_le_bytes());
        out.extend_from_slice(&len_u32(meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        write_blob(&mut out, &self.params)?;
        write_blob(&mut out, &self.optimizer)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != GNOC_MAGIC {
            return Err(Error::Format("not a GNOC checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != GNOC_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
        let params = r.blob()?;
        let optimizer = r.blob()?;
        if !r.buf.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", r.buf.len())));
        }
        Ok(Self { meta, params, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Copies named sections (with an optional name prefix) into `model`.
pub(crate) fn load_into(mut model: OperatorModel, sections: &[Section], prefix: &str) -> Result<OperatorModel> {
    let mut params = model.parameters_mut();
    let wanted: Vec<&Section> = sections.iter().filter(|(n, _)| n.starts_with(prefix)).collect();
    if wanted.len() != params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} parameter sections, model needs {}",
            wanted.len(),
            params.len()
        )));
    }
    for ((name, dst), (src_name, src)) in params.iter_mut().zip(wanted) {
        if &src_name[prefix.len()..] != name.as_str() || src.len() != dst.len() {
            return Err(Error::Format(format!(
                "section `{src_name}` ({} values) does not fit parameter `{name}` ({} values)",
                src.len(),
                dst.len()
            )));
        }
        dst.copy_from_slice(src);
    }
    drop(params);
    Ok(model)
}

pub(crate) fn sections_of(model: &OperatorModel, prefix: &str) -> Vec<Section> {
    model
        .parameters()
        .into_iter()
        .map(|(n, p)| (format!("{prefix}{n}"), p.to_vec()))
        .collect()
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Capacity(format!("length {n} does not fit the checkpoint format")))
}

fn write_blob(out: &mut Vec<u8>, sections: &[Section]) -> Result<()> {
    out.extend_from_slice(&len_u32(sections.len())?.to_le_bytes());
    for (name, values) in sections {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint section `{name}`")));
        }
        out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn blob(&mut self) -> Result<Vec<Section>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Format("section name is not UTF-8".into()))?
                .to_owned();
            let n = usize::try_from(self.u64()?).map_err(|_| Error::Format("section too large".into()))?;
            let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("section too large".into()))?)?;
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("section `{name}` holds non-finite values")));
            }
            out.push((name, values));
        }
        Ok(out)
    }
}

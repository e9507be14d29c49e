//! Checkpoint files: a magic line `CDS-CKPT v1`, one line of JSON metadata,
//! then little-endian `f64` blobs (time-embedding frequencies, step-size
//! embedding frequencies, then every parameter tensor in registry order).

use std::fs;
use std::io::Write;
use std::path::Path;

use cds_core::diffcore::{ParamStore, Tensor};
use cds_core::dynamics::{Schedule, VpSchedule};
use cds_core::nets::{ConsistencyHead, ControlNet, FourierEmbedding, NetConfig};
use serde::{Deserialize, Serialize};

pub const MAGIC: &str = "CDS-CKPT v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint or unsupported version (expected '{MAGIC}', found '{0}')")]
    Version(String),
    #[error("malformed checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint truncated: expected {expected} bytes of parameters, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] cds_core::Error),
}

/// Which training procedure produced the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dis,
    Scds,
    Cdds,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dis => "dis",
            ModelKind::Scds => "scds",
            ModelKind::Cdds => "cdds",
        }
    }
}

/// Serializable mirror of [`Schedule`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleMeta {
    Vp {
        beta_min: f64,
        beta_max: f64,
        horizon: f64,
    },
    Constant {
        drift: f64,
        diffusion: f64,
        horizon: f64,
    },
}

impl From<Schedule> for ScheduleMeta {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Vp(v) => ScheduleMeta::Vp {
                beta_min: v.beta_min,
                beta_max: v.beta_max,
                horizon: v.horizon,
            },
            Schedule::Constant {
                drift,
                diffusion,
                horizon,
            } => ScheduleMeta::Constant {
                drift,
                diffusion,
                horizon,
            },
        }
    }
}

impl TryFrom<ScheduleMeta> for Schedule {
    type Error = cds_core::Error;

    fn try_from(s: ScheduleMeta) -> Result<Self, Self::Error> {
        Ok(match s {
            ScheduleMeta::Vp {
                beta_min,
                beta_max,
                horizon,
            } => Schedule::Vp(VpSchedule::new(beta_min, beta_max, horizon)?),
            ScheduleMeta::Constant {
                drift,
                diffusion,
                horizon,
            } => Schedule::Constant {
                drift,
                diffusion,
                horizon,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

/// The JSON metadata line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ModelKind,
    pub dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub horizon: f64,
    /// Training grid size `N`.
    pub steps: usize,
    pub schedule: ScheduleMeta,
    /// Whether the network adds the stationary reference control.
    pub reference: bool,
    pub seed: u64,
    pub target: String,
    pub iterations: usize,
    /// Consistency models only: skip scale and pinned step-size input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_input: Option<f64>,
    pub params: Vec<TensorMeta>,
}

/// A trained model of any kind.
#[derive(Clone, Debug)]
pub enum Model {
    Sampler(ControlNet),
    Consistency(ConsistencyHead),
}

impl Model {
    pub fn net(&self) -> &ControlNet {
        match self {
            Model::Sampler(net) => net,
            Model::Consistency(head) => head.trunk(),
        }
    }

    pub fn dim(&self) -> usize {
        self.net().dim()
    }
}

/// A model with its provenance metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: Metadata,
    pub model: Model,
}

/// Fields of [`Metadata`] that describe training rather than architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct RunInfo {
    pub kind: ModelKind,
    pub steps: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub target: String,
    pub iterations: usize,
}

impl Checkpoint {
    pub fn new(model: Model, info: RunInfo) -> Self {
        let net = model.net();
        let cfg = net.config();
        let (skip_scale, d_input) = match &model {
            Model::Consistency(h) => (Some(h.scale()), Some(h.d_input())),
            Model::Sampler(_) => (None, None),
        };
        let meta = Metadata {
            kind: info.kind,
            dim: cfg.dim,
            hidden: cfg.hidden,
            depth: cfg.depth,
            fourier_features: cfg.fourier_features,
            fourier_scale: cfg.fourier_scale,
            horizon: cfg.horizon,
            steps: info.steps,
            schedule: info.schedule.into(),
            reference: cfg.reference.is_some(),
            seed: info.seed,
            target: info.target,
            iterations: info.iterations,
            skip_scale,
            d_input,
            params: net
                .params()
                .iter()
                .map(|(_, name, t)| TensorMeta {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        Self { meta, model }
    }

    pub fn schedule(&self) -> Result<Schedule, CheckpointError> {
        Ok(Schedule::try_from(self.meta.schedule)?)
    }

    /// Serialized bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::new();
        writeln!(out, "{MAGIC}")?;
        let json = serde_json::to_string(&self.meta)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        writeln!(out, "{json}")?;
        let net = self.model.net();
        let (emb_t, emb_d) = net.embeddings();
        let values = emb_t
            .frequencies()
            .iter()
            .chain(emb_d.frequencies())
            .chain(net.params().iter().flat_map(|(_, _, t)| t.data()));
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let (magic, rest) = split_line(bytes).ok_or_else(|| {
            CheckpointError::Version(
                String::from_utf8_lossy(&bytes[..bytes.len().min(32)]).into_owned(),
            )
        })?;
        if magic != MAGIC.as_bytes() {
            return Err(CheckpointError::Version(
                String::from_utf8_lossy(magic).into_owned(),
            ));
        }
        let (json, blob) = split_line(rest)
            .ok_or_else(|| CheckpointError::Metadata("missing metadata line".into()))?;
        let meta: Metadata =
            serde_json::from_slice(json).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let schedule = Schedule::try_from(meta.schedule)?;
        let config = NetConfig {
            dim: meta.dim,
            hidden: meta.hidden,
            depth: meta.depth,
            fourier_features: meta.fourier_features,
            fourier_scale: meta.fourier_scale,
            horizon: meta.horizon,
            reference: meta.reference.then_some(schedule),
        };
        let features = meta.fourier_features;
        let param_len: usize = meta
            .params
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum();
        let expected = 8 * (2 * features + param_len);
        if blob.len() != expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: blob.len(),
            });
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        let emb_t = FourierEmbedding::from_frequencies(take(features));
        let emb_d = FourierEmbedding::from_frequencies(take(features));
        let mut params = ParamStore::new();
        for p in &meta.params {
            let data = take(p.shape.iter().product());
            params.register(p.name.clone(), Tensor::new(p.shape.clone(), data)?);
        }
        let net = ControlNet::from_parts(config, emb_t, emb_d, params)
            .map_err(|e| CheckpointError::Architecture(e.to_string()))?;
        let model = match meta.kind {
            ModelKind::Cdds => {
                let (scale, d_input) = meta.skip_scale.zip(meta.d_input).ok_or_else(|| {
                    CheckpointError::Metadata(
                        "consistency checkpoint without skip_scale/d_input".into(),
                    )
                })?;
                Model::Consistency(ConsistencyHead::new(net, scale, d_input)?)
            }
            _ => Model::Sampler(net),
        };
        Ok(Self { meta, model })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads a checkpoint and checks that it models a `dim`-dimensional target.
    pub fn load_for_dim(path: &Path, dim: usize) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        if ckpt.meta.dim != dim {
            return Err(CheckpointError::Architecture(format!(
                "checkpoint has dimension {}, target has dimension {}",
                ckpt.meta.dim, dim
            )));
        }
        Ok(ckpt)
    }
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

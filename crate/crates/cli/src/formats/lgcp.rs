use std::path::Path;

use anyhow::{Context, Result};
use cds_core::targets::{LgcpConfig, LgcpTarget};
use serde::{Deserialize, Serialize};

/// A persisted LGCP dataset: grid, generating seed, counts and kernel constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgcpData {
    pub grid: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub beta: f64,
    pub mean: f64,
    pub counts: Vec<u64>,
}

impl LgcpData {
    pub fn from_target(t: &LgcpTarget) -> Self {
        let c = t.config();
        Self {
            grid: c.grid,
            seed: t.seed(),
            sigma2: c.sigma2,
            beta: c.beta,
            mean: c.mean,
            counts: t.counts().to_vec(),
        }
    }

    pub fn into_target(self) -> Result<LgcpTarget> {
        let config = LgcpConfig {
            grid: self.grid,
            sigma2: self.sigma2,
            beta: self.beta,
            mean: self.mean,
        };
        Ok(LgcpTarget::new(config, self.counts, self.seed)?)
    }
}

pub fn save_lgcp(path: &Path, t: &LgcpTarget) -> Result<()> {
    let json = serde_json::to_string_pretty(&LgcpData::from_target(t))?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn load_lgcp(path: &Path) -> Result<LgcpTarget> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let data: LgcpData =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    data.into_target()
}

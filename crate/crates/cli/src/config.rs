//! Run configuration: defaults, optionally overridden by a flat `key = value`
//! TOML file, then by command-line flags. The resolved configuration is
//! written next to every run's outputs.

use std::path::Path;

use cds_core::dynamics::{Schedule, VpSchedule};
use cds_core::nets::{AdamConfig, NetConfig};
use cds_core::trainers::{DistillConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    pub batch: usize,
    /// SDE grid size `N` (teacher grid for distillation).
    pub steps: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip: f64,
    pub lambda_s: f64,
    pub lambda_sc: f64,
    /// Initial noise multiplier of the training trajectories.
    pub explore: f64,
    /// Fraction of the run over which `explore` decays to 1.
    pub explore_decay: f64,
    pub seed: u64,
    pub hidden: usize,
    pub depth: usize,
    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub horizon: f64,
    /// Distillation time nodes.
    pub nodes: usize,
    pub skip_scale: f64,
    /// Add the fixed `-g(t) x` term that makes the untrained control keep
    /// the prior stationary (off: the untrained control is zero, and the
    /// untrained process spreads far beyond the prior).
    pub prior_reference: bool,
    pub lgcp_grid: usize,
    /// Sinkhorn snapshot cadence during training; `0` disables snapshots.
    pub eval_every: usize,
    pub eval_n: usize,
    pub threads: usize,
    /// Record wall-clock milliseconds in the metrics (zeros otherwise).
    pub wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let vp = VpSchedule::default();
        let net = NetConfig::new(1);
        Self {
            iterations: 5000,
            batch: 512,
            steps: 128,
            lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            clip: adam.clip.unwrap_or(0.0),
            lambda_s: 1.0,
            lambda_sc: 1.0,
            explore: 3.0,
            explore_decay: 0.7,
            seed: 0,
            hidden: net.hidden,
            depth: net.depth,
            fourier_features: net.fourier_features,
            fourier_scale: net.fourier_scale,
            beta_min: vp.beta_min,
            beta_max: vp.beta_max,
            horizon: vp.horizon,
            nodes: 18,
            skip_scale: 1.0,
            prior_reference: true,
            lgcp_grid: 8,
            eval_every: 500,
            eval_n: 512,
            threads: 1,
            wall_clock: true,
        }
    }
}

/// Values given on the command line; `None` keeps the file/default value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub lambda_sc: Option<f64>,
    pub seed: Option<u64>,
    pub hidden: Option<usize>,
    pub depth: Option<usize>,
    pub nodes: Option<usize>,
    pub lgcp_grid: Option<usize>,
    pub eval_every: Option<usize>,
    pub threads: Option<usize>,
    pub wall_clock: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Defaults, then `file` (if any), then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text).map_err(|message| ConfigError::Parse {
                    path: path.display().to_string(),
                    message,
                })?
            }
            None => Self::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = overrides.$field { cfg.$field = v; })*
            };
        }
        apply!(
            iterations, batch, steps, lr, lambda_sc, seed, hidden, depth, nodes, lgcp_grid,
            eval_every, threads, wall_clock
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch < 2 {
            return bad("batch must be at least 2");
        }
        if self.steps < 2 || !self.steps.is_power_of_two() {
            return bad("steps must be a power of two >= 2");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.nodes < 2 {
            return bad("nodes must be at least 2");
        }
        if !(self.explore >= 1.0) || !(0.0..=1.0).contains(&self.explore_decay) {
            return bad("explore must be >= 1 and explore_decay in [0, 1]");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, cds_core::Error> {
        Ok(Schedule::Vp(VpSchedule::new(
            self.beta_min,
            self.beta_max,
            self.horizon,
        )?))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
            clip: (self.clip > 0.0).then_some(self.clip),
        }
    }

    pub fn net_config(&self, dim: usize, sched: Schedule) -> NetConfig {
        NetConfig {
            hidden: self.hidden,
            depth: self.depth,
            fourier_features: self.fourier_features,
            fourier_scale: self.fourier_scale,
            ..if self.prior_reference {
                NetConfig::with_reference(dim, sched)
            } else {
                NetConfig {
                    horizon: sched.horizon(),
                    ..NetConfig::new(dim)
                }
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch: self.batch,
            steps: self.steps,
            adam: self.adam(),
            lambda_s: self.lambda_s,
            lambda_sc: self.lambda_sc,
            explore: self.explore,
            explore_decay: self.explore_decay,
            seed: self.seed,
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig {
            iterations: self.iterations,
            batch: self.batch,
            fine_steps: self.steps,
            nodes: self.nodes,
            skip_scale: self.skip_scale,
            adam: self.adam(),
            seed: self.seed,
        }
    }

    /// Pretty JSON of the resolved configuration.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

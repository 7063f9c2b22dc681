use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::losses::{Distance, LossConfig, LossKind, Phi};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Widths of the GELU hidden layers.
    pub hidden: Vec<usize>,
    /// Width of the shared embedding the heads read from.
    pub embed_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![256, 256],
            embed_dim: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: Option<EnvId>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_norm_clip: f64,
    pub control_loss_weight: f64,
    pub state_loss_weight: f64,
    pub pairwise_loss_weight: f64,
    pub loss_kind: LossKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub phi: Phi,
    pub distance: Distance,
    pub divergence_penalty: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: None,
            dataset: None,
            out: None,
            epochs: 125,
            batch_size: 1024,
            lr: 3e-4,
            weight_decay: 1e-4,
            grad_norm_clip: 2.0,
            control_loss_weight: 1.0,
            state_loss_weight: 0.0,
            pairwise_loss_weight: 0.0,
            loss_kind: LossKind::Wta,
            k: 8,
            seed: 0,
            phi: Phi::Tanh,
            distance: Distance::L2,
            divergence_penalty: 1e3,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    /// Shipped per-environment defaults.
    pub fn for_env(env: EnvId) -> Self {
        let text = match env {
            EnvId::Toy1d => include_str!("../../configs/train/toy1d.toml"),
            EnvId::Cartpole => include_str!("../../configs/train/cartpole.toml"),
            EnvId::Reacher => include_str!("../../configs/train/reacher.toml"),
            EnvId::Driving => include_str!("../../configs/train/driving.toml"),
        };
        toml::from_str(text).expect("shipped training config parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of heads actually trained; regression is always single-output.
    pub fn effective_k(&self) -> usize {
        match self.loss_kind {
            LossKind::Regression => 1,
            _ => self.k,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            kind: self.loss_kind,
            control_weight: self.control_loss_weight,
            state_weight: self.state_loss_weight,
            alpha_k: match self.loss_kind {
                LossKind::Pairwise | LossKind::Mix => self.pairwise_loss_weight,
                _ => 0.0,
            },
            phi: self.phi,
            distance: self.distance,
            divergence_penalty: self.divergence_penalty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.grad_norm_clip > 0.0) {
            return bad("grad_norm_clip must be positive");
        }
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        self.loss().validate()
    }
}

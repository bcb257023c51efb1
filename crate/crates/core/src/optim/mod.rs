//! Adam, the base / contrastive / masked-generative training loops and
//! early stopping on validation Recall@20.

mod adam;
mod pretrain;
mod train;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneKind, DEFAULT_DIM, DEFAULT_INIT_STD};
use crate::{Error, Result};

pub use adam::{adam_step, AdamConfig, Moments, OptimizerState};
pub use pretrain::{init_from_checkpoint, remap_table};
pub use train::{train, train_base, train_con, train_gen, train_with, EpochLog, TrainOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Backbone with BPR only.
    #[default]
    Base,
    /// Contrastive alignment of representations and down-projected semantics.
    Con,
    /// Masked reconstruction of semantics from up-projected representations.
    Gen,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Self::Base),
            "con" => Ok(Self::Con),
            "gen" => Ok(Self::Gen),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}` (base|con|gen)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Base => "base",
            Self::Con => "con",
            Self::Gen => "gen",
        })
    }
}

/// Every training hyperparameter. Missing fields deserialize to defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub backbone: BackboneKind,
    pub layers: usize,
    pub dim: usize,
    pub init_std: f64,
    pub l2_weight: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub mask_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let bb = BackboneConfig::default();
        Self {
            mode: Mode::Base,
            backbone: bb.kind,
            layers: bb.layers,
            dim: DEFAULT_DIM,
            init_std: DEFAULT_INIT_STD,
            l2_weight: bb.l2_weight,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 4096,
            max_epochs: 300,
            patience: 5,
            eval_every: 1,
            seed: 0,
            lambda: 1.0,
            tau: 0.2,
            mask_ratio: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.patience == 0 || self.eval_every == 0 || self.batch_size == 0 || self.dim == 0 {
            return bad("patience, eval_every, batch_size and dim must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("mask ratio must lie in [0, 1], got {}", self.mask_ratio));
        }
        if !(self.lambda >= 0.0 && self.l2_weight >= 0.0 && self.init_std >= 0.0) {
            return bad("lambda, l2_weight and init_std must be non-negative".into());
        }
        Ok(())
    }

    pub fn backbone_config(&self) -> BackboneConfig {
        BackboneConfig {
            kind: self.backbone,
            layers: self.layers,
            l2_weight: self.l2_weight,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Width of the backbone output.
    pub fn out_dim(&self) -> usize {
        self.backbone_config().out_dim(self.dim)
    }
}

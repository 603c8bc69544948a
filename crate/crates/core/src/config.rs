//! Run configuration: every hyperparameter of both stages, read from a strict
//! JSON file where absent keys take their defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::mil::GeneratorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub clip_len_frames: usize,
    /// Sub-bags per bag.
    #[serde(rename = "L")]
    pub num_subbags: usize,
    /// Clips per sub-bag.
    #[serde(rename = "T")]
    pub subbag_len: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gen_lr: f64,
    pub gen_epochs: usize,
    /// Detectors per class in the guided branch.
    #[serde(rename = "K")]
    pub detectors: usize,
    pub enc_lr: f64,
    pub enc_weight_decay: f64,
    pub enc_epochs: usize,
    pub w0: f64,
    pub w1: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Update the stub backbone jointly with the encoder on the raw-clip path.
    pub train_backbone: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            clip_len_frames: 16,
            num_subbags: 32,
            subbag_len: 8,
            lambda1: 8e-5,
            lambda2: 8e-5,
            gen_lr: 0.01,
            gen_epochs: 100,
            detectors: 15,
            enc_lr: 1e-4,
            enc_weight_decay: 5e-4,
            enc_epochs: 300,
            w0: 1.2,
            w1: 0.8,
            dropout: 0.6,
            seed: 7,
            train_backbone: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("clip_len_frames", self.clip_len_frames),
            ("L", self.num_subbags),
            ("T", self.subbag_len),
            ("gen_epochs", self.gen_epochs),
            ("K", self.detectors),
            ("enc_epochs", self.enc_epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        let rates = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gen_lr", self.gen_lr),
            ("enc_lr", self.enc_lr),
            ("enc_weight_decay", self.enc_weight_decay),
            ("w0", self.w0),
            ("w1", self.w1),
            ("dropout", self.dropout),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        if self.dropout >= 1.0 {
            return Err(Error::Config(format!(
                "`dropout` must be below 1, got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::json("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_subbags: self.num_subbags,
            subbag_len: self.subbag_len,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lr: self.gen_lr,
            epochs: self.gen_epochs,
            dropout: self.dropout,
        }
    }

    pub fn encoder(&self) -> TrainConfig {
        TrainConfig {
            lr: self.enc_lr,
            weight_decay: self.enc_weight_decay,
            epochs: self.enc_epochs,
            w0: self.w0,
            w1: self.w1,
            seed: self.seed,
            train_backbone: self.train_backbone,
        }
    }
}

/// Defaults when `path` is `None`; the effective config is logged.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunConfig::from_json(&text).map_err(|e| match e {
                Error::Json { source, .. } => Error::json(p.display().to_string(), source),
                other => other,
            })?
        }
    };
    log::info!(
        "effective config: {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    Ok(cfg)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::{OptimizerConfig, OptimizerKind};
use crate::error::{Error, Result};
use crate::simworld::GenConfig;
use crate::worldmodel::{LossWeights, ModelConfig};

/// Scalar width used for stored parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    /// Parameters are rounded to `f32` after every update and saved as `f32`.
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    pub batch_size: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// Steps between checkpoints; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            kind: o.kind,
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            steps: 2000,
            batch_size: 1,
            clip_norm: 0.0,
            checkpoint_every: 0,
        }
    }
}

impl OptimSection {
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { kind: self.kind, lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Corpus directory (relative paths resolve against the working directory).
    pub corpus: PathBuf,
    /// Trailing corpus episodes kept out of training for evaluation.
    pub holdout: usize,
    /// Seed of the trajectory vocabulary and its clustering.
    pub vocab_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { corpus: PathBuf::from("corpus"), holdout: 8, vocab_seed: 0 }
    }
}

/// Everything that defines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub optim: OptimSection,
    pub data: DataSection,
    pub gen: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            optim: OptimSection::default(),
            data: DataSection::default(),
            gen: GenConfig::default(),
        }
    }
}

impl RunConfig {
    /// Small dimensions that train in minutes on one CPU core.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.model.dim = 64;
        c.optim.lr = 1e-3;
        c.optim.clip_norm = 5.0;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.gen.validate()?;
        let o = &self.optim;
        if !(o.lr >= 0.0 && o.lr.is_finite()) || o.batch_size == 0 {
            return Err(Error::Config("optim.lr must be finite and non-negative, optim.batch_size positive".into()));
        }
        if !(o.clip_norm >= 0.0) {
            return Err(Error::Config("optim.clip_norm must be non-negative".into()));
        }
        if self.gen.waypoints != self.model.waypoints {
            return Err(Error::Config(format!(
                "gen.waypoints {} differs from model.waypoints {}",
                self.gen.waypoints, self.model.waypoints
            )));
        }
        if self.gen.image_size != self.model.image_h || self.gen.image_size != self.model.image_w {
            return Err(Error::Config("gen.image_size must equal model.image_h and model.image_w".into()));
        }
        if self.gen.rig.yaws_deg.len() != self.model.views {
            return Err(Error::Config(format!(
                "gen.rig has {} cameras but model.views is {}",
                self.gen.rig.yaws_deg.len(),
                self.model.views
            )));
        }
        if self.gen.horizon != self.model.horizon {
            return Err(Error::Config("gen.horizon must equal model.horizon".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

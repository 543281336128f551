use serde::{Deserialize, Serialize};

use crate::encoders::DOWNSAMPLE;
use crate::error::{Error, Result};

/// Network and data dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Camera views `M`.
    pub views: usize,
    /// Input image rows `H`.
    pub image_h: usize,
    /// Input image columns `W`.
    pub image_w: usize,
    pub channels: usize,
    /// Latent width `D`.
    pub dim: usize,
    pub heads: usize,
    /// Intentions per command `K`.
    pub intentions: usize,
    /// Waypoints per trajectory `S`.
    pub waypoints: usize,
    /// Semantic classes `C`.
    pub classes: usize,
    /// Trajectory vocabulary size `N`.
    pub vocab_size: usize,
    /// Frames between the current and the predicted future latent, `n`.
    pub horizon: usize,
    /// Width of the 3-D position encoding fed to the spatial MLP.
    pub pe_dim: usize,
    /// Cross-attention layers in the future-latent predictor.
    pub dream_layers: usize,
    /// Meters per unit of trajectory head output.
    pub traj_scale: f64,
    /// Endpoint lateral offset (m) separating straight from turning
    /// vocabulary trajectories.
    pub lateral_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            views: 3,
            image_h: 64,
            image_w: 64,
            channels: 3,
            dim: 256,
            heads: 4,
            intentions: 6,
            waypoints: 6,
            classes: 5,
            vocab_size: 8192,
            horizon: 3,
            pe_dim: 96,
            dream_layers: 2,
            traj_scale: 10.0,
            lateral_threshold: 2.0,
        }
    }
}

impl ModelConfig {
    /// Feature-map rows `h`.
    pub fn feat_h(&self) -> usize {
        self.image_h / DOWNSAMPLE
    }

    /// Feature-map columns `w`.
    pub fn feat_w(&self) -> usize {
        self.image_w / DOWNSAMPLE
    }

    /// Latent tokens `M·h·w`.
    pub fn tokens(&self) -> usize {
        self.views * self.feat_h() * self.feat_w()
    }

    pub fn latent_shape(&self) -> [usize; 4] {
        [self.views, self.feat_h(), self.feat_w(), self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("views", self.views),
            ("channels", self.channels),
            ("dim", self.dim),
            ("heads", self.heads),
            ("intentions", self.intentions),
            ("waypoints", self.waypoints),
            ("classes", self.classes),
            ("vocab_size", self.vocab_size),
            ("horizon", self.horizon),
            ("dream_layers", self.dream_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("model.{name} must be positive"));
            }
        }
        if self.image_h == 0 || self.image_w == 0 || self.image_h % DOWNSAMPLE != 0 || self.image_w % DOWNSAMPLE != 0 {
            return bad(format!("model image extents {}x{} must be positive multiples of {DOWNSAMPLE}", self.image_h, self.image_w));
        }
        if self.dim % self.heads != 0 {
            return bad(format!("model.dim {} is not divisible by model.heads {}", self.dim, self.heads));
        }
        if self.dim % 4 != 0 {
            return bad(format!("model.dim {} must be divisible by 4 for the 2-D intention encoding", self.dim));
        }
        if self.pe_dim == 0 || self.pe_dim % 6 != 0 {
            return bad(format!("model.pe_dim {} must be a positive multiple of 6", self.pe_dim));
        }
        if self.classes > 255 {
            return bad("model.classes must fit below the ignore label 255".into());
        }
        if !(self.traj_scale > 0.0) || !(self.lateral_threshold >= 0.0) {
            return bad("model.traj_scale must be positive and model.lateral_threshold non-negative".into());
        }
        Ok(())
    }
}

/// Weights of the composite objective and the focal focusing parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Semantic cross-entropy weight `α`.
    pub alpha: f64,
    /// Latent reconstruction weight `β`.
    pub beta: f64,
    /// Score (focal) weight `γ`.
    pub gamma: f64,
    /// Trajectory L1 weight `η`.
    pub eta: f64,
    /// Focal focusing exponent.
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.2, beta: 0.2, gamma: 0.5, eta: 1.0, focal_gamma: 2.0 }
    }
}

impl LossWeights {
    /// `α·sem + β·recon + γ·score + η·traj`.
    pub fn combine(&self, sem: f64, recon: f64, score: f64, traj: f64) -> f64 {
        self.alpha * sem + self.beta * recon + self.gamma * score + self.eta * traj
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.eta, self.focal_gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got {all:?}")));
        }
        Ok(())
    }
}

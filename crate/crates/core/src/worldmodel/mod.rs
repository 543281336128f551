//! Multi-modal trajectory generation, intention-conditioned future latent
//! prediction, and latent-distance modality selection.

mod config;
mod heads;
mod model;

pub use config::{LossWeights, ModelConfig};
pub use heads::{select_modality, ActionEncoder, Dreamer, ScoreNet, Selection, TrajectoryHead};
pub use model::{
    composite_loss, LossBreakdown, PlanBundle, PlanResult, TrainingOutput, TrainingSample, WorldModel,
};

//! Intention queries and the physical world latent encoder.

mod intention;
mod physical;

pub use intention::{build_intention_points, Command, IntentionEncoder, PlanningQuery, TrajectoryVocabulary};
pub use physical::{
    ContextEncoder, EncodedFrame, FrameInput, PhysicalEncoder, PriorProvider, SemanticHead, SemanticLogits, SpatialEncoder,
    TemporalAggregator, WorldLatent, DOWNSAMPLE,
};

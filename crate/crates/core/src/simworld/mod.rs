//! Synthetic multi-view driving world: scripted episodes, ray-cast
//! rendering with exact depth and semantics, corpus I/O and open-loop
//! metrics.

mod episode;
mod io;
mod metrics;
mod render;
mod scene;
mod shapes;

pub use episode::{generate_episode, Episode, FrameObservation, GenConfig, GroundTruthPriors, PreparedFrame};
pub use io::{
    decode_frame, encode_frame, episode_dir_name, read_corpus, read_episode, read_index, write_corpus, write_episode,
    CorpusIndex, IndexEntry, ManeuverCounts, CORPUS_VERSION, FRAME_MAGIC, FRAME_VERSION,
};
pub use metrics::{
    aggregate, collides_at, evaluate_plan, horizon_index, waypoint_headings, EpisodeEvaluation, MetricsReport, SampleMetrics,
    HORIZONS_S,
};
pub use render::{cast_ray, render_frame, Hit, RenderedFrame, RigConfig, MAX_DEPTH_M};
pub use scene::{
    ego_rect, generate_vocabulary, motion_profiles, MotionProfile, Obstacle, Road, Scene, CLASS_BACKGROUND, CLASS_BARRIER,
    CLASS_NAMES, CLASS_PEDESTRIAN, CLASS_ROAD, CLASS_VEHICLE, EGO_LENGTH, EGO_WIDTH,
};
pub use shapes::{OrientedRect, Pose2};

/// Seed of the `i`-th episode of a corpus generated from `seed`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Generates `count` episodes from a corpus seed, in parallel.
pub fn generate_corpus(config: &GenConfig, seed: u64, count: usize) -> crate::Result<Vec<Episode>> {
    let indices: Vec<usize> = (0..count).collect();
    crate::par::par_map(&indices, |_, &i| generate_episode(config, episode_seed(seed, i))).into_iter().collect()
}

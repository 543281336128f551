#![allow(dead_code)]

pub mod oracles;

use intentdrive::encoders::{build_intention_points, PriorProvider};
use intentdrive::harness::RunConfig;
use intentdrive::simworld::{generate_episode, generate_vocabulary, Episode, GroundTruthPriors, PreparedFrame};
use intentdrive::worldmodel::{ModelConfig, TrainingSample, WorldModel};

/// 16-pixel images, width-8 latents: fast enough for finite differences.
pub fn tiny_config() -> RunConfig {
    let mut c = RunConfig::desk();
    c.model.image_h = 16;
    c.model.image_w = 16;
    c.model.dim = 8;
    c.model.heads = 2;
    c.model.pe_dim = 24;
    c.model.vocab_size = 600;
    c.gen.image_size = 16;
    c.gen.frames = 12;
    c.gen.min_obstacles = 1;
    c.gen.max_obstacles = 3;
    c.data.holdout = 1;
    c
}

pub fn tiny_model(config: &ModelConfig, seed: u64) -> WorldModel {
    let vocab = generate_vocabulary(config.vocab_size, config.waypoints, 0.5, 0).unwrap();
    let intents = build_intention_points(&vocab, config.intentions, 0, config.lateral_threshold).unwrap();
    WorldModel::new(config.clone(), intents, seed).unwrap()
}

pub fn tiny_episode(seed: u64) -> Episode {
    generate_episode(&tiny_config().gen, seed).unwrap()
}

/// Owned inputs for one training sample at frame `t`.
pub struct SampleFrames {
    pub frames: [PreparedFrame; 4],
    pub semantics: Vec<u8>,
    pub t: usize,
}

impl SampleFrames {
    pub fn new(ep: &Episode, t: usize, horizon: usize) -> Self {
        let p = GroundTruthPriors;
        let prep = |i: usize| PreparedFrame::new(&ep.frames[i], &p);
        Self {
            frames: [prep(t.saturating_sub(1)), prep(t), prep(t + horizon - 1), prep(t + horizon)],
            semantics: p.semantics_of(&ep.frames[t]),
            t,
        }
    }

    pub fn sample<'a>(&'a self, ep: &'a Episode) -> TrainingSample<'a> {
        TrainingSample {
            current: self.frames[1].input(),
            previous: (self.t > 0).then(|| self.frames[0].input()),
            future: self.frames[3].input(),
            future_previous: Some(self.frames[2].input()),
            semantics: &self.semantics,
            command: ep.frames[self.t].command,
            expert: &ep.frames[self.t].expert,
            rig: &ep.rig,
            timestamp: self.t,
        }
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Precision, RunConfig};
use crate::diffcore::{Archive, DType, Optimizer, Tensor};
use crate::encoders::build_intention_points;
use crate::error::{Error, Result};
use crate::geometry::IntentionPointSet;
use crate::simworld::generate_vocabulary;
use crate::worldmodel::WorldModel;

/// Model, optimizer and step counter. Per-step randomness is derived from
/// `(config.seed, step)`, so the step is the whole RNG state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub model: WorldModel,
    pub optimizer: Optimizer,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: RunConfig,
    config_hash: String,
    seed: u64,
    step: u64,
    optimizer_step: u64,
}

/// Intention points from the configured vocabulary.
pub fn intention_points(config: &RunConfig) -> Result<IntentionPointSet> {
    let m = &config.model;
    let vocab = generate_vocabulary(m.vocab_size, m.waypoints, config.gen.dt, config.data.vocab_seed)?;
    build_intention_points(&vocab, m.intentions, config.data.vocab_seed, m.lateral_threshold)
}

impl TrainState {
    /// Fresh model and optimizer for `config`.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mut model = WorldModel::new(config.model.clone(), intention_points(config)?, config.seed)?;
        if config.precision == Precision::F32 {
            round_to_f32(&mut model);
        }
        let optimizer = Optimizer::new(config.optim.optimizer(), &model.store);
        Ok(Self { step: 0, model, optimizer })
    }

    pub fn to_archive(&self, config: &RunConfig) -> Result<Archive> {
        let meta = CheckpointMeta {
            config: config.clone(),
            config_hash: config.hash(),
            seed: config.seed,
            step: self.step,
            optimizer_step: self.optimizer.step,
        };
        let mut archive = Archive { metadata: serde_json::to_string(&meta)?, entries: Vec::new() };
        let dtype = match config.precision {
            Precision::F64 => DType::F64,
            Precision::F32 => DType::F32,
        };
        for (_, p) in self.model.store.iter() {
            archive.push(format!("param/{}", p.name), dtype, p.value.clone());
        }
        for ((_, p), (m, v)) in self.model.store.iter().zip(&self.optimizer.moments) {
            archive.push(format!("adam_m/{}", p.name), DType::F64, m.clone());
            archive.push(format!("adam_v/{}", p.name), DType::F64, v.clone());
        }
        archive.push("intentions", DType::F64, self.model.intentions.to_tensor());
        Ok(archive)
    }

    pub fn save(&self, config: &RunConfig, path: &Path) -> Result<()> {
        self.to_archive(config)?.save(path)
    }

    /// Restores a state and the config it was trained with.
    pub fn from_archive(archive: &Archive) -> Result<(Self, RunConfig)> {
        let meta: CheckpointMeta = serde_json::from_str(&archive.metadata)?;
        if meta.config.hash() != meta.config_hash {
            return Err(Error::CheckpointMismatch("stored config hash does not match stored config".into()));
        }
        let config = meta.config;
        config.validate()?;
        let intentions = archive
            .get("intentions")
            .ok_or_else(|| Error::CheckpointMismatch("missing intention points".into()))?;
        let intentions = IntentionPointSet::from_tensor(&intentions.tensor)?;
        let mut model = WorldModel::new(config.model.clone(), intentions, config.seed)?;
        let mut optimizer = Optimizer::new(config.optim.optimizer(), &model.store);
        optimizer.step = meta.optimizer_step;
        let fetch = |name: String, like: &Tensor| -> Result<Tensor> {
            let e = archive.get(&name).ok_or_else(|| Error::CheckpointMismatch(format!("missing entry `{name}`")))?;
            if e.tensor.shape() != like.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "`{name}` has shape {:?}, model expects {:?}",
                    e.tensor.shape(),
                    like.shape()
                )));
            }
            Ok(e.tensor.clone())
        };
        for ((_, p), (m, v)) in model.store.iter_mut().zip(optimizer.moments.iter_mut()) {
            p.value = fetch(format!("param/{}", p.name), &p.value)?;
            *m = fetch(format!("adam_m/{}", p.name), m)?;
            *v = fetch(format!("adam_v/{}", p.name), v)?;
        }
        let expected = 3 * model.store.len() + 1;
        if archive.entries.len() != expected {
            return Err(Error::CheckpointMismatch(format!(
                "archive has {} entries, model expects {expected}",
                archive.entries.len()
            )));
        }
        Ok((Self { step: meta.step, model, optimizer }, config))
    }

    pub fn load(path: &Path) -> Result<(Self, RunConfig)> {
        Self::from_archive(&Archive::load(path)?)
    }
}

/// Rounds every parameter to the nearest `f32`.
pub fn round_to_f32(model: &mut WorldModel) {
    for (_, p) in model.store.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

/// Loads a checkpoint and checks its model dimensions against `config`.
pub fn load_compatible(path: &Path, config: &RunConfig) -> Result<TrainState> {
    let (state, stored) = TrainState::load(path)?;
    if stored.model != config.model {
        return Err(Error::CheckpointMismatch(format!(
            "{} was trained with different model dimensions than the supplied config",
            path.display()
        )));
    }
    Ok(state)
}

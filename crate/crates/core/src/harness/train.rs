use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::{round_to_f32, TrainState};
use super::config::{Precision, RunConfig};
use crate::diffcore::{clip_grad_norm, ParamGrads, Tape};
use crate::encoders::PriorProvider;
use crate::error::{Error, Result};
use crate::simworld::{Episode, GroundTruthPriors, PreparedFrame};
use crate::worldmodel::{LossBreakdown, TrainingSample};

/// Append-only JSON-lines sink.
pub struct MetricsLog {
    file: File,
    path: PathBuf,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(Error::io(path))?;
        Ok(Self { file, path: path.to_path_buf() })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(Error::io(&self.path))
    }
}

/// One optimisation step as logged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub kind: &'static str,
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    pub grad_norm: f64,
    /// Modality chosen by latent distance for each batch sample.
    pub selected: Vec<usize>,
}

/// `(episode, frame)` pairs with a full expert horizon and a future frame.
pub fn training_samples(episodes: &[Episode], config: &RunConfig) -> Vec<(usize, usize)> {
    episodes
        .iter()
        .enumerate()
        .flat_map(|(e, ep)| ep.trainable_frames(config.model.waypoints, config.model.horizon).map(move |t| (e, t)))
        .collect()
}

/// Deterministic per-step generator.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Forward and backward for one sample; returns the loss breakdown, the
/// selected modality and the parameter gradients.
pub fn sample_gradients(
    state: &TrainState,
    config: &RunConfig,
    episode: &Episode,
    t: usize,
) -> Result<(LossBreakdown, usize, ParamGrads)> {
    let n = config.model.horizon;
    if t + n >= episode.frames.len() {
        return Err(Error::FrameOutOfRange { frame: t + n, frames: episode.frames.len() });
    }
    let priors = GroundTruthPriors;
    let prep = |i: usize| PreparedFrame::new(&episode.frames[i], &priors);
    let current = prep(t);
    let previous = (t > 0).then(|| prep(t - 1));
    let future = prep(t + n);
    let future_previous = prep(t + n - 1);
    let semantics = priors.semantics_of(&episode.frames[t]);
    let sample = TrainingSample {
        current: current.input(),
        previous: previous.as_ref().map(|p| p.input()),
        future: future.input(),
        future_previous: Some(future_previous.input()),
        semantics: &semantics,
        command: episode.frames[t].command,
        expert: &episode.frames[t].expert,
        rig: &episode.rig,
        timestamp: t,
    };
    let mut tape = Tape::new();
    let out = state.model.training_forward(&mut tape, &sample, &config.loss)?;
    if !out.losses.total.is_finite() {
        return Err(Error::NonFiniteLoss { step: state.step });
    }
    let grads = tape.backward(out.total)?.param_grads(&tape, &state.model.store);
    Ok((out.losses, out.selected, grads))
}

/// Runs `steps` optimisation steps. On a non-finite loss the pre-step state
/// is written to `checkpoint` (when given) and the error returned.
pub fn train(
    config: &RunConfig,
    state: &mut TrainState,
    episodes: &[Episode],
    steps: u64,
    mut log: Option<&mut MetricsLog>,
    checkpoint: Option<&Path>,
) -> Result<Vec<StepRecord>> {
    let samples = training_samples(episodes, config);
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no trainable frames in the supplied episodes".into()));
    }
    let batch = config.optim.batch_size;
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let mut rng = step_rng(config.seed, state.step);
        let mut total = LossBreakdown::default();
        let mut selected = Vec::with_capacity(batch);
        let mut grads: Option<ParamGrads> = None;
        let mut failure = None;
        for _ in 0..batch {
            let (e, t) = samples[rng.gen_range(0..samples.len())];
            match sample_gradients(state, config, &episodes[e], t) {
                Ok((l, j, g)) => {
                    total.sem += l.sem / batch as f64;
                    total.recon += l.recon / batch as f64;
                    total.score += l.score / batch as f64;
                    total.traj += l.traj / batch as f64;
                    total.total += l.total / batch as f64;
                    selected.push(j);
                    match grads.as_mut() {
                        Some(acc) => acc.merge(g),
                        None => grads = Some(g),
                    }
                }
                Err(err) => {
                    failure = Some(err);
                    break;
                }
            }
        }
        let mut grads = grads.unwrap_or_else(|| ParamGrads(Vec::new()));
        grads.scale(1.0 / batch as f64);
        let finite = grads.0.iter().flatten().all(|g| g.is_finite());
        if failure.is_some() || !finite {
            if let Some(path) = checkpoint {
                state.save(config, path)?;
            }
            return Err(match failure {
                Some(e) => e,
                None => Error::NonFiniteLoss { step: state.step },
            });
        }
        let store = &mut state.model.store;
        store.zero_grad();
        store.accumulate(&grads);
        let grad_norm = if config.optim.clip_norm > 0.0 {
            clip_grad_norm(store, config.optim.clip_norm)
        } else {
            clip_grad_norm(store, f64::INFINITY)
        };
        state.optimizer.step(store);
        if config.precision == Precision::F32 {
            round_to_f32(&mut state.model);
        }
        state.step += 1;
        let record = StepRecord { kind: "train", step: state.step, losses: total, grad_norm, selected };
        log::debug!("step {} loss {:.5} traj {:.4}", record.step, total.total, total.traj);
        if let Some(log) = log.as_deref_mut() {
            log.append(&record)?;
        }
        if let Some(path) = checkpoint {
            let every = config.optim.checkpoint_every;
            if every > 0 && state.step % every == 0 {
                state.save(config, path)?;
            }
        }
        records.push(record);
    }
    if let Some(path) = checkpoint {
        state.save(config, path)?;
    }
    Ok(records)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossWeights, ModelConfig};
use super::heads::{select_modality, ActionEncoder, Dreamer, ScoreNet, TrajectoryHead};
use crate::diffcore::{argmax, ParamStore, Tape, Tensor, Var};
use crate::encoders::{Command, EncodedFrame, FrameInput, IntentionEncoder, PhysicalEncoder, PlanningQuery, WorldLatent};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, IntentionPointSet};

/// Everything the planner produces for one frame before selection.
#[derive(Clone, Debug)]
pub struct PlanBundle {
    pub query: PlanningQuery,
    /// `[K, S, 2]` meters.
    pub trajectories: Var,
    /// `[K, D]`.
    pub actions: Var,
    /// `K` latents shaped like the input latent.
    pub predicted: Vec<Var>,
    /// `[K]`, softmax-normalised.
    pub scores: Var,
}

/// One training example: frames `t-1, t` plus `t+n-1, t+n` and the expert
/// trajectory from `t`.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSample<'a> {
    pub current: FrameInput<'a>,
    pub previous: Option<FrameInput<'a>>,
    pub future: FrameInput<'a>,
    pub future_previous: Option<FrameInput<'a>>,
    /// `M·h·w` class ids of the current frame.
    pub semantics: &'a [u8],
    pub command: Command,
    /// `[S, 2]` meters, ego frame at `t`.
    pub expert: &'a Tensor,
    pub rig: &'a [CameraModel],
    pub timestamp: usize,
}

/// Scalar values of the four objective terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sem: f64,
    pub recon: f64,
    pub score: f64,
    pub traj: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutput {
    pub total: Var,
    /// `[sem, recon, score, traj]` on the tape.
    pub terms: [Var; 4],
    pub losses: LossBreakdown,
    /// Index chosen by latent distance.
    pub selected: usize,
    pub distances: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Inference output for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub frame_id: usize,
    pub command: Command,
    pub j: usize,
    pub scores: Vec<f64>,
    pub trajectory: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    /// All `K` intention trajectories, selected one included.
    #[serde(default)]
    pub candidates: Vec<Vec<[f64; 2]>>,
}

/// `α·sem + β·recon + γ·score + η·traj` on the tape.
pub fn composite_loss(tape: &mut Tape, terms: [Var; 4], weights: &LossWeights) -> Result<Var> {
    let [sem, recon, score, traj] = terms;
    tape.weighted_sum(&[(sem, weights.alpha), (recon, weights.beta), (score, weights.gamma), (traj, weights.eta)])
}

/// The full planner with its parameters and intention points.
#[derive(Clone, Debug)]
pub struct WorldModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub intentions: IntentionPointSet,
    pub intention: IntentionEncoder,
    pub physical: PhysicalEncoder,
    pub planner: TrajectoryHead,
    pub action: ActionEncoder,
    pub dreamer: Dreamer,
    pub scorer: ScoreNet,
}

impl WorldModel {
    pub fn new(config: ModelConfig, intentions: IntentionPointSet, seed: u64) -> Result<Self> {
        config.validate()?;
        if intentions.k != config.intentions || intentions.points.len() != 3 * config.intentions {
            return Err(Error::Config(format!(
                "intention set has K = {} ({} points), config expects K = {}",
                intentions.k,
                intentions.points.len(),
                config.intentions
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let intention = IntentionEncoder::new(&mut store, c.dim, c.heads, &mut rng)?;
        let physical = PhysicalEncoder::new(&mut store, c.channels, c.dim, c.pe_dim, c.classes, c.heads, &mut rng)?;
        let planner = TrajectoryHead::new(&mut store, c.dim, c.heads, c.waypoints, c.traj_scale, &mut rng)?;
        let action = ActionEncoder::new(&mut store, c.dim, c.waypoints, c.traj_scale, &mut rng)?;
        let dreamer = Dreamer::new(&mut store, c.tokens(), c.dim, c.heads, c.dream_layers, &mut rng)?;
        let scorer = ScoreNet::new(&mut store, c.dim, &mut rng)?;
        Ok(Self { config, store, intentions, intention, physical, planner, action, dreamer, scorer })
    }

    /// Confirms the rig and frame tensors agree with the configured dims.
    pub fn check_inputs(&self, frame: FrameInput, rig: &[CameraModel]) -> Result<()> {
        let c = &self.config;
        let image = [c.views, c.image_h, c.image_w, c.channels];
        let depth = [c.views, c.feat_h(), c.feat_w()];
        if frame.images.shape() != image {
            return Err(Error::CheckpointMismatch(format!("images {:?}, model expects {image:?}", frame.images.shape())));
        }
        if frame.depth.shape() != depth {
            return Err(Error::CheckpointMismatch(format!("depth {:?}, model expects {depth:?}", frame.depth.shape())));
        }
        if rig.len() != c.views || rig.iter().any(|cam| cam.h != c.feat_h() || cam.w != c.feat_w()) {
            return Err(Error::CheckpointMismatch(format!(
                "rig of {} cameras does not match {} views at {}x{}",
                rig.len(),
                c.views,
                c.feat_h(),
                c.feat_w()
            )));
        }
        Ok(())
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        current: FrameInput,
        previous: Option<FrameInput>,
        rig: &[CameraModel],
        timestamp: usize,
    ) -> Result<EncodedFrame> {
        self.check_inputs(current, rig)?;
        if let Some(p) = previous {
            self.check_inputs(p, rig)?;
        }
        self.physical.encode(tape, &self.store, current, previous, rig, timestamp)
    }

    /// Latent of a future frame with shared weights and no gradient path.
    pub fn target_latent(&self, future: FrameInput, previous: Option<FrameInput>, rig: &[CameraModel]) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let enc = self.encode(&mut tape, future, previous, rig, 0)?;
        Ok(tape.value(enc.latent.latent).clone())
    }

    pub fn plan_bundle(&self, tape: &mut Tape, latent: &WorldLatent, command: Command) -> Result<PlanBundle> {
        let query = self.intention.encode(tape, &self.store, &self.intentions, command)?;
        self.plan_with_query(tape, query, latent)
    }

    /// Planning, action encoding, future prediction and scoring for an
    /// explicit planning query.
    pub fn plan_with_query(&self, tape: &mut Tape, query: PlanningQuery, latent: &WorldLatent) -> Result<PlanBundle> {
        let trajectories = self.planner.plan(tape, &self.store, &query, latent)?;
        let actions = self.action.encode(tape, &self.store, trajectories)?;
        let predicted = self.dreamer.dream(tape, &self.store, actions, latent)?;
        let scores = self.scorer.score(tape, &self.store, &predicted)?;
        Ok(PlanBundle { query, trajectories, actions, predicted, scores })
    }

    pub fn training_forward(&self, tape: &mut Tape, sample: &TrainingSample, weights: &LossWeights) -> Result<TrainingOutput> {
        let target = self.target_latent(sample.future, sample.future_previous, sample.rig)?;
        self.training_forward_with_target(tape, sample, target, weights)
    }

    /// [`WorldModel::training_forward`] against a precomputed future latent,
    /// which enters the tape as a constant.
    pub fn training_forward_with_target(
        &self,
        tape: &mut Tape,
        sample: &TrainingSample,
        target: Tensor,
        weights: &LossWeights,
    ) -> Result<TrainingOutput> {
        let s = self.config.waypoints;
        if sample.expert.shape() != [s, 2] {
            return Err(Error::ShapeMismatch { op: "training_forward", lhs: sample.expert.shape().to_vec(), rhs: vec![s, 2] });
        }
        if target.shape() != self.config.latent_shape() {
            return Err(Error::ShapeMismatch {
                op: "training_forward",
                lhs: target.shape().to_vec(),
                rhs: self.config.latent_shape().to_vec(),
            });
        }
        let enc = self.encode(tape, sample.current, sample.previous, sample.rig, sample.timestamp)?;
        let (_, sem) = self.physical.semantic.loss(tape, &self.store, enc.features, sample.semantics)?;
        let bundle = self.plan_bundle(tape, &enc.latent, sample.command)?;
        let actual = tape.constant(target);
        let selection = select_modality(tape, &bundle.predicted, actual)?;
        let score = tape.focal(bundle.scores, selection.index, weights.focal_gamma)?;
        let chosen = tape.gather(bundle.trajectories, &[selection.index])?;
        let chosen = tape.reshape(chosen, [s, 2])?;
        let expert = tape.constant(sample.expert.clone());
        let traj = tape.l1(chosen, expert)?;
        let terms = [sem, selection.recon, score, traj];
        let total = composite_loss(tape, terms, weights)?;
        let v = |x: Var| tape.value(x).item();
        let losses = LossBreakdown { sem: v(sem), recon: v(selection.recon), score: v(score), traj: v(traj), total: v(total) };
        Ok(TrainingOutput {
            total,
            terms,
            losses,
            selected: selection.index,
            distances: selection.distances,
            scores: tape.value(bundle.scores).data().to_vec(),
        })
    }

    /// Plans from the frames observed so far; the last entry of `history`
    /// is the current frame, the one before it (if any) the previous frame.
    pub fn infer_plan(&self, history: &[FrameInput], rig: &[CameraModel], command: Command, frame_id: usize) -> Result<PlanResult> {
        let (&current, past) = history
            .split_last()
            .ok_or_else(|| Error::InvalidArgument("inference needs at least the current frame".into()))?;
        let mut tape = Tape::no_grad();
        let enc = self.encode(&mut tape, current, past.last().copied(), rig, frame_id)?;
        let bundle = self.plan_bundle(&mut tape, &enc.latent, command)?;
        Ok(self.result_from_bundle(&tape, &bundle, command, frame_id))
    }

    /// Selects by highest score (lowest index on ties).
    pub fn result_from_bundle(&self, tape: &Tape, bundle: &PlanBundle, command: Command, frame_id: usize) -> PlanResult {
        let scores = tape.value(bundle.scores).data().to_vec();
        let j = argmax(&scores);
        let trajs = tape.value(bundle.trajectories).data();
        let s = self.config.waypoints;
        let candidates: Vec<Vec<[f64; 2]>> =
            trajs.chunks(s * 2).map(|t| t.chunks(2).map(|p| [p[0], p[1]]).collect()).collect();
        PlanResult { frame_id, command, j, scores, trajectory: candidates[j].clone(), distances: None, candidates }
    }
}

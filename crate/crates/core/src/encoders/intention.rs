use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Attention, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{kmeans, sinusoidal_pe, IntentionPointSet, KMeansConfig, Point2};

/// High-level driving command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Left,
    Straight,
    Right,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::Left, Command::Straight, Command::Right];

    pub fn index(self) -> usize {
        match self {
            Command::Left => 0,
            Command::Straight => 1,
            Command::Right => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Left => "left",
            Command::Straight => "straight",
            Command::Right => "right",
        }
    }

    /// Command implied by an endpoint's lateral offset (y > 0 is left).
    pub fn from_lateral(y: f64, threshold: f64) -> Self {
        if y > threshold {
            Command::Left
        } else if y < -threshold {
            Command::Right
        } else {
            Command::Straight
        }
    }
}

/// Bank of `N` candidate ego trajectories of `S` `(x, y)` waypoints,
/// meters in the ego frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryVocabulary {
    n: usize,
    s: usize,
    data: Vec<f64>,
}

impl TrajectoryVocabulary {
    /// Validates that every trajectory starts within 3 m of the origin.
    pub fn new(n: usize, s: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || s == 0 || data.len() != n * s * 2 {
            return Err(Error::InvalidShape { shape: vec![n, s, 2], reason: "vocabulary data length" });
        }
        let vocab = Self { n, s, data };
        for i in 0..n {
            let [x, y] = vocab.waypoint(i, 0);
            if x.hypot(y) > 3.0 {
                return Err(Error::InvalidArgument(format!("trajectory {i} starts {:.2} m from the origin", x.hypot(y))));
            }
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn waypoints(&self) -> usize {
        self.s
    }

    pub fn waypoint(&self, traj: usize, step: usize) -> Point2 {
        let o = (traj * self.s + step) * 2;
        [self.data[o], self.data[o + 1]]
    }

    pub fn endpoint(&self, traj: usize) -> Point2 {
        self.waypoint(traj, self.s - 1)
    }

    pub fn as_tensor(&self) -> Tensor {
        Tensor::new([self.n, self.s, 2], self.data.clone()).expect("validated extents")
    }

    /// Endpoints grouped by command (left, straight, right) using the sign
    /// and size of their lateral offset.
    pub fn partition_endpoints(&self, lateral_threshold: f64) -> [Vec<Point2>; 3] {
        let mut groups: [Vec<Point2>; 3] = Default::default();
        for i in 0..self.n {
            let end = self.endpoint(i);
            groups[Command::from_lateral(end[1], lateral_threshold).index()].push(end);
        }
        groups
    }
}

/// Clusters each command's vocabulary endpoints into `k` intention points.
pub fn build_intention_points(
    vocab: &TrajectoryVocabulary,
    k: usize,
    seed: u64,
    lateral_threshold: f64,
) -> Result<IntentionPointSet> {
    let groups = vocab.partition_endpoints(lateral_threshold);
    let mut points = Vec::with_capacity(3 * k);
    for (command, group) in Command::ALL.iter().zip(&groups) {
        if group.len() < k {
            return Err(Error::InvalidArgument(format!(
                "command `{}` has {} vocabulary trajectories, need at least {k}",
                command.name(),
                group.len()
            )));
        }
        let clusters = kmeans(group, &KMeansConfig::new(k, seed.wrapping_add(command.index() as u64)))?;
        points.extend(clusters.centroids);
    }
    Ok(IntentionPointSet { k, points })
}

/// `K` planning queries for the active command, `[K, D]`.
#[derive(Clone, Copy, Debug)]
pub struct PlanningQuery {
    pub q_plan: Var,
    pub command: Command,
}

/// Learned ego query plus encoded intention points, mixed by self-attention.
#[derive(Clone, Debug)]
pub struct IntentionEncoder {
    pub q_ego: ParamId,
    pub point_mlp: Mlp,
    pub attention: Attention,
    pub dim: usize,
}

impl IntentionEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if dim % 4 != 0 {
            return Err(Error::InvalidArgument(format!("intention width {dim} must be divisible by 4")));
        }
        Ok(Self {
            q_ego: store.add_uniform("intention.q_ego", [dim], dim, rng)?,
            point_mlp: Mlp::new(store, "intention.point_mlp", &[dim, dim, dim], rng)?,
            attention: Attention::new(store, "intention.attention", dim, dim, heads, rng)?,
            dim,
        })
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, intents: &IntentionPointSet, command: Command) -> Result<PlanningQuery> {
        let q_plan = self.encode_points(tape, store, intents.for_command(command.index()))?;
        Ok(PlanningQuery { q_plan, command })
    }

    /// `SelfAttention(Q_ego + MLP(SPE(points)))` for an explicit point list.
    pub fn encode_points(&self, tape: &mut Tape, store: &ParamStore, points: &[Point2]) -> Result<Var> {
        let k = points.len();
        let raw = Tensor::new([k, 2], points.iter().flatten().copied().collect())?;
        let pe = tape.constant(sinusoidal_pe(&raw, self.dim)?);
        let q_i = self.point_mlp.forward(tape, store, pe)?;
        let q_ego = tape.param(store, self.q_ego);
        let tokens = tape.add_broadcast(q_i, q_ego)?;
        self.attention.self_attention(tape, store, tokens)
    }
}

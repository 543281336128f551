use rand::Rng;

use crate::diffcore::{argmin, Attention, Linear, Mlp, ParamId, ParamStore, Tape, Var};
use crate::encoders::{PlanningQuery, WorldLatent};
use crate::error::{Error, Result};

/// Flattens `[.., D]` to `[tokens, D]`.
fn tokens(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.shape(x);
    let d = *shape.last().unwrap();
    let n = shape.iter().product::<usize>() / d;
    tape.reshape(x, [n, d])
}

/// Planning queries read the latent, then an MLP emits `S` waypoints each.
#[derive(Clone, Debug)]
pub struct TrajectoryHead {
    pub attention: Attention,
    pub mlp: Mlp,
    pub waypoints: usize,
    pub scale: f64,
}

impl TrajectoryHead {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, heads: usize, waypoints: usize, scale: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            attention: Attention::new(store, "planner.attention", dim, dim, heads, rng)?,
            mlp: Mlp::new(store, "planner.mlp", &[dim, dim, waypoints * 2], rng)?,
            waypoints,
            scale,
        })
    }

    /// `T = scale · MLP(Q_plan + CrossAttention(Q_plan, L_t))`, `[K, S, 2]` meters.
    pub fn plan(&self, tape: &mut Tape, store: &ParamStore, query: &PlanningQuery, latent: &WorldLatent) -> Result<Var> {
        let ctx = tokens(tape, latent.latent)?;
        let attended = self.attention.cross_attention(tape, store, query.q_plan, ctx)?;
        let h = tape.add(query.q_plan, attended)?;
        let out = self.mlp.forward(tape, store, h)?;
        let out = tape.scale(out, self.scale);
        let k = tape.shape(out)[0];
        tape.reshape(out, [k, self.waypoints, 2])
    }
}

/// MLP over flattened waypoints giving one action token per trajectory.
#[derive(Clone, Debug)]
pub struct ActionEncoder {
    pub mlp: Mlp,
    pub scale: f64,
}

impl ActionEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, waypoints: usize, scale: f64, rng: &mut R) -> Result<Self> {
        Ok(Self { mlp: Mlp::new(store, "action.mlp", &[waypoints * 2, dim, dim], rng)?, scale })
    }

    /// `[K, S, 2]` meters to `[K, D]`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, trajectories: Var) -> Result<Var> {
        let shape = tape.shape(trajectories).to_vec();
        if shape.len() != 3 || shape[2] != 2 || shape[1] * 2 != self.mlp.d_in() {
            return Err(Error::ShapeMismatch { op: "action_encode", lhs: shape, rhs: vec![self.mlp.d_in() / 2, 2] });
        }
        let flat = tape.reshape(trajectories, [shape[0], shape[1] * 2])?;
        let flat = tape.scale(flat, 1.0 / self.scale);
        self.mlp.forward(tape, store, flat)
    }
}

/// Intention-conditioned future latent predictor.
#[derive(Clone, Debug)]
pub struct Dreamer {
    /// Learned `[M·h·w, D]` future query bank.
    pub q_future: ParamId,
    /// Projects `concat(A_k, L)` from `2D` back to `D`.
    pub fuse: Linear,
    pub layers: Vec<Attention>,
}

impl Dreamer {
    pub fn new<R: Rng>(store: &mut ParamStore, tokens: usize, dim: usize, heads: usize, layers: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            q_future: store.add_uniform("dreamer.q_future", [tokens, dim], dim, rng)?,
            fuse: Linear::new(store, "dreamer.fuse", 2 * dim, dim, rng)?,
            layers: (0..layers)
                .map(|i| Attention::new(store, &format!("dreamer.layer{i}"), dim, dim, heads, rng))
                .collect::<Result<_>>()?,
        })
    }

    /// One predicted `[M, h, w, D]` latent per row of `actions [K, D]`.
    pub fn dream(&self, tape: &mut Tape, store: &ParamStore, actions: Var, latent: &WorldLatent) -> Result<Vec<Var>> {
        let shape = tape.shape(latent.latent).to_vec();
        let ctx = tokens(tape, latent.latent)?;
        let (n, d) = (tape.shape(ctx)[0], tape.shape(ctx)[1]);
        let q0 = tape.param(store, self.q_future);
        if tape.shape(q0) != [n, d] {
            return Err(Error::ShapeMismatch { op: "dream_future", lhs: tape.shape(q0).to_vec(), rhs: vec![n, d] });
        }
        let k = tape.shape(actions)[0];
        let ones = tape.constant(crate::diffcore::Tensor::ones([n, 1]));
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let a = tape.gather(actions, &[i])?;
            // broadcast A_k onto every token: [n, 1] · [1, D]
            let a = tape.matmul(ones, a)?;
            let joined = tape.concat(&[a, ctx], 1)?;
            let context = self.fuse.forward(tape, store, joined)?;
            let mut h = q0;
            for layer in &self.layers {
                let attended = layer.cross_attention(tape, store, h, context)?;
                h = tape.add(h, attended)?;
            }
            out.push(tape.reshape(h, shape.clone())?);
        }
        Ok(out)
    }
}

/// Mean-pooled latent to a scalar logit; softmax across intentions.
#[derive(Clone, Debug)]
pub struct ScoreNet {
    pub mlp: Mlp,
}

impl ScoreNet {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self { mlp: Mlp::new(store, "scorenet.mlp", &[dim, dim, 1], rng)? })
    }

    /// Raw logits `[K]`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, predicted: &[Var]) -> Result<Var> {
        if predicted.is_empty() {
            return Err(Error::InvalidArgument("no predicted latents to score".into()));
        }
        let mut pooled = Vec::with_capacity(predicted.len());
        for &p in predicted {
            let t = tokens(tape, p)?;
            let m = tape.mean_axis(t, 0)?;
            let d = tape.shape(m)[0];
            pooled.push(tape.reshape(m, [1, d])?);
        }
        let stacked = tape.concat(&pooled, 0)?;
        let logits = self.mlp.forward(tape, store, stacked)?;
        tape.reshape(logits, [predicted.len()])
    }

    /// Scores `𝕊 = softmax(logits)`, `[K]`.
    pub fn score(&self, tape: &mut Tape, store: &ParamStore, predicted: &[Var]) -> Result<Var> {
        let logits = self.logits(tape, store, predicted)?;
        tape.softmax(logits, 0)
    }
}

/// Outcome of matching predicted latents against the observed one.
#[derive(Clone, Debug)]
pub struct Selection {
    pub index: usize,
    /// Mean squared distance of every prediction to the target.
    pub distances: Vec<f64>,
    /// Distance of the selected prediction, on the tape.
    pub recon: Var,
}

/// Picks the prediction closest (MSE) to `actual`; ties go to the lowest
/// index. `actual` should be a constant so no gradient reaches the target.
pub fn select_modality(tape: &mut Tape, predicted: &[Var], actual: Var) -> Result<Selection> {
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("no predicted latents to select from".into()));
    }
    let losses = predicted.iter().map(|&p| tape.mse(p, actual)).collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = losses.iter().map(|&l| tape.value(l).item()).collect();
    let index = argmin(&distances);
    Ok(Selection { index, distances, recon: losses[index] })
}

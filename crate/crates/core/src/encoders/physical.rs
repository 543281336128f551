use rand::Rng;

use crate::diffcore::{Attention, Conv2d, ConvGeom, Linear, Mlp, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{position_maps, sinusoidal_pe, CameraModel};

/// Spatial reduction of the context encoder (three stride-2 convolutions).
pub const DOWNSAMPLE: usize = 8;

/// Source of per-pixel depth and semantic priors for a frame.
pub trait PriorProvider {
    type Frame;
    /// `[M, h, w]` meters along the optical axis; non-positive marks no hit.
    fn depth_of(&self, frame: &Self::Frame) -> Tensor;
    /// `M·h·w` class ids, row-major, [`crate::diffcore::IGNORE_LABEL`] where unknown.
    fn semantics_of(&self, frame: &Self::Frame) -> Vec<u8>;
}

/// World latent `L_t`, `[M, h, w, D]`.
#[derive(Clone, Copy, Debug)]
pub struct WorldLatent {
    pub latent: Var,
    pub timestamp: usize,
}

/// Per-cell class logits, `[M, h, w, C]`.
#[derive(Clone, Copy, Debug)]
pub struct SemanticLogits {
    pub logits: Var,
    pub classes: usize,
}

/// Strided convolutional image backbone shared across views.
#[derive(Clone, Debug)]
pub struct ContextEncoder {
    pub convs: Vec<Conv2d>,
}

impl ContextEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, channels: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let geom = ConvGeom { kernel: 3, stride: 2, pad: 1 };
        let widths = [channels, 16, 32, dim];
        let convs = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Conv2d::new(store, &format!("context.conv{i}"), w[0], w[1], geom, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { convs })
    }

    /// `[M, H, W, ch]` images to `[M, H/8, W/8, D]` features.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, images: Var) -> Result<Var> {
        let shape = tape.shape(images).to_vec();
        if shape.len() != 4 || shape[1] % DOWNSAMPLE != 0 || shape[2] % DOWNSAMPLE != 0 {
            return Err(Error::InvalidShape { shape, reason: "image extents must be divisible by 8" });
        }
        let mut x = images;
        for (i, conv) in self.convs.iter().enumerate() {
            if i > 0 {
                x = tape.gelu(x);
            }
            x = conv.forward(tape, store, x)?;
        }
        Ok(x)
    }
}

/// Per-cell linear classifier on backbone features.
#[derive(Clone, Debug)]
pub struct SemanticHead {
    pub linear: Linear,
}

impl SemanticHead {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        Ok(Self { linear: Linear::new(store, "semantic.head", dim, classes, rng)? })
    }

    /// Logits for `features [M, h, w, D]` and the mean cross-entropy against
    /// `targets`. Returns a zero loss (and logs a warning) if every cell is
    /// ignored.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, features: Var, targets: &[u8]) -> Result<(SemanticLogits, Var)> {
        let shape = tape.shape(features).to_vec();
        let cells: usize = shape[..shape.len() - 1].iter().product();
        let flat = tape.reshape(features, [cells, shape[shape.len() - 1]])?;
        let logits = self.linear.forward(tape, store, flat)?;
        if targets.iter().all(|&t| t == crate::diffcore::IGNORE_LABEL) {
            log::warn!("semantic targets are entirely ignored; semantic loss is zero");
        }
        let loss = tape.cross_entropy(logits, targets)?;
        let classes = self.linear.d_out;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = classes;
        let logits = tape.reshape(logits, out_shape)?;
        Ok((SemanticLogits { logits, classes }, loss))
    }
}

/// Ego-frame position embedding `E_t = MLP(SPE(P_t))`.
#[derive(Clone, Debug)]
pub struct SpatialEncoder {
    pub pe_dim: usize,
    pub mlp: Mlp,
}

impl SpatialEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, pe_dim: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if pe_dim == 0 || pe_dim % 6 != 0 {
            return Err(Error::InvalidArgument(format!("position encoding width {pe_dim} must be a multiple of 6")));
        }
        Ok(Self { pe_dim, mlp: Mlp::new(store, "spatial.mlp", &[pe_dim, dim, dim], rng)? })
    }

    /// `[M, h, w, D]` embedding of the back-projected depth maps.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, depth: &Tensor, rig: &[CameraModel]) -> Result<Var> {
        let pe = sinusoidal_pe(&position_maps(depth, rig)?.0, self.pe_dim)?;
        let pe = tape.constant(pe);
        self.mlp.forward(tape, store, pe)
    }

    /// `F̂_t = F_t + E_t`.
    pub fn fuse(&self, tape: &mut Tape, store: &ParamStore, features: Var, depth: &Tensor, rig: &[CameraModel]) -> Result<Var> {
        let e = self.embed(tape, store, depth, rig)?;
        tape.add(features, e)
    }
}

/// Cross-attention from the current frame's tokens onto the previous frame's.
#[derive(Clone, Debug)]
pub struct TemporalAggregator {
    pub attention: Attention,
}

impl TemporalAggregator {
    pub fn new<R: Rng>(store: &mut ParamStore, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(Self { attention: Attention::new(store, "temporal.attention", dim, dim, heads, rng)? })
    }

    /// `L_t = F̂_t + CrossAttention(F̂_t, F̂_{t-1})` over all `M·h·w` tokens.
    pub fn aggregate(&self, tape: &mut Tape, store: &ParamStore, current: Var, previous: Var) -> Result<Var> {
        let shape = tape.shape(current).to_vec();
        if tape.shape(previous) != shape.as_slice() {
            return Err(Error::ShapeMismatch { op: "temporal_aggregate", lhs: shape, rhs: tape.shape(previous).to_vec() });
        }
        let d = *shape.last().unwrap();
        let tokens = shape.iter().product::<usize>() / d;
        let q = tape.reshape(current, [tokens, d])?;
        let c = tape.reshape(previous, [tokens, d])?;
        let attended = self.attention.cross_attention(tape, store, q, c)?;
        let out = tape.add(q, attended)?;
        tape.reshape(out, shape)
    }
}

/// Inputs the physical encoder needs from one frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameInput<'a> {
    /// `[M, H, W, ch]` in `[0, 1]`.
    pub images: &'a Tensor,
    /// `[M, h, w]` meters.
    pub depth: &'a Tensor,
}

/// Backbone, semantic head, spatial embedding and temporal aggregation.
#[derive(Clone, Debug)]
pub struct PhysicalEncoder {
    pub context: ContextEncoder,
    pub semantic: SemanticHead,
    pub spatial: SpatialEncoder,
    pub temporal: TemporalAggregator,
}

/// Latent plus the pre-fusion backbone features of the current frame.
#[derive(Clone, Copy, Debug)]
pub struct EncodedFrame {
    pub latent: WorldLatent,
    pub features: Var,
}

impl PhysicalEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        channels: usize,
        dim: usize,
        pe_dim: usize,
        classes: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            context: ContextEncoder::new(store, channels, dim, rng)?,
            semantic: SemanticHead::new(store, dim, classes, rng)?,
            spatial: SpatialEncoder::new(store, pe_dim, dim, rng)?,
            temporal: TemporalAggregator::new(store, dim, heads, rng)?,
        })
    }

    /// `(F_t, F̂_t)` for one frame.
    pub fn features(&self, tape: &mut Tape, store: &ParamStore, frame: FrameInput, rig: &[CameraModel]) -> Result<(Var, Var)> {
        let images = tape.constant(frame.images.clone());
        let f = self.context.forward(tape, store, images)?;
        let fhat = self.spatial.fuse(tape, store, f, frame.depth, rig)?;
        Ok((f, fhat))
    }

    /// Encodes frame `t`, aggregating `previous` (frame `t-1`) when given and
    /// the current frame itself otherwise.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        current: FrameInput,
        previous: Option<FrameInput>,
        rig: &[CameraModel],
        timestamp: usize,
    ) -> Result<EncodedFrame> {
        let (f, fhat) = self.features(tape, store, current, rig)?;
        let prev = match previous {
            Some(p) => self.features(tape, store, p, rig)?.1,
            None => fhat,
        };
        let latent = self.temporal.aggregate(tape, store, fhat, prev)?;
        Ok(EncodedFrame { latent: WorldLatent { latent, timestamp }, features: f })
    }
}

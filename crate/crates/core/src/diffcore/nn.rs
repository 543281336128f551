//! Parameterised layers built from tape operations.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{ConvGeom, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Affine map `x·W + b` over the last axis. `W` is stored `[d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let weight = store.add_uniform(format!("{name}.weight"), [d_in, d_out], d_in, rng)?;
        let bias = store.add_uniform(format!("{name}.bias"), [d_out], d_in, rng)?;
        Ok(Self { weight, bias, d_in, d_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let last = *tape.shape(x).last().unwrap();
        if last != self.d_in {
            return Err(Error::ShapeMismatch { op: "linear", lhs: tape.shape(x).to_vec(), rhs: vec![self.d_in, self.d_out] });
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_broadcast(y, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Stack of affine layers with GELU between consecutive layers (none after
/// the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [d_in, hidden.., d_out]`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least input and output widths".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().d_out
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.gelu(h);
            }
            h = layer.forward(tape, store, h)?;
        }
        Ok(h)
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().unwrap()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
}

/// Multi-head scaled dot-product attention with learned query, key, value
/// and output projections. No positional terms are applied inside.
#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl Attention {
    /// `d_ctx` is the width of the attended context tokens.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, d_ctx: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::HeadCount { dim, heads });
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng)?,
            key: Linear::new(store, &format!("{name}.key"), d_ctx, dim, rng)?,
            value: Linear::new(store, &format!("{name}.value"), d_ctx, dim, rng)?,
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng)?,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.d_out
    }

    pub fn self_attention(&self, tape: &mut Tape, store: &ParamStore, tokens: Var) -> Result<Var> {
        self.cross_attention(tape, store, tokens, tokens)
    }

    /// `queries[Q, D]` attend over `context[C, Dc]`; returns `[Q, D]`.
    pub fn cross_attention(&self, tape: &mut Tape, store: &ParamStore, queries: Var, context: Var) -> Result<Var> {
        for v in [queries, context] {
            if tape.shape(v).len() != 2 {
                return Err(Error::InvalidArgument(format!("attention expects token matrices, got {:?}", tape.shape(v))));
            }
        }
        let (nq, nc) = (tape.shape(queries)[0], tape.shape(context)[0]);
        let dim = self.dim();
        let dh = dim / self.heads;
        let q = self.query.forward(tape, store, queries)?;
        let k = self.key.forward(tape, store, context)?;
        let v = self.value.forward(tape, store, context)?;
        let attended = if self.heads == 1 {
            let scores = tape.matmul_t(q, k)?;
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let weights = tape.softmax(scores, 1)?;
            tape.matmul(weights, v)?
        } else {
            let split = |tape: &mut Tape, x: Var, n: usize| -> Result<Var> {
                let x = tape.reshape(x, [n, self.heads, dh])?;
                tape.permute(x, &[1, 0, 2])
            };
            let (q, k, v) = (split(tape, q, nq)?, split(tape, k, nc)?, split(tape, v, nc)?);
            let scores = tape.matmul_t(q, k)?;
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let weights = tape.softmax(scores, 2)?;
            let out = tape.matmul(weights, v)?;
            let out = tape.permute(out, &[1, 0, 2])?;
            tape.reshape(out, [nq, dim])?
        };
        self.output.forward(tape, store, attended)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.query, &self.key, &self.value, &self.output].iter().flat_map(|l| l.params()).collect()
    }
}

/// Square-kernel 2-D convolution over `[M, H, W, C]` images, one weight
/// set shared by all `M` views.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub linear: Linear,
    pub geom: ConvGeom,
    pub c_out: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        geom: ConvGeom,
        rng: &mut R,
    ) -> Result<Self> {
        let linear = Linear::new(store, name, geom.kernel * geom.kernel * c_in, c_out, rng)?;
        Ok(Self { linear, geom, c_out })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, images: Var) -> Result<Var> {
        let shape = tape.shape(images).to_vec();
        let cols = tape.im2col(images, self.geom)?;
        let out = self.linear.forward(tape, store, cols)?;
        let (ho, wo) = (self.geom.out_extent(shape[1]), self.geom.out_extent(shape[2]));
        tape.reshape(out, [shape[0], ho, wo, self.c_out])
    }
}

/// Overwrites every parameter of `ids` with zeros.
pub fn zero_params(store: &mut ParamStore, ids: &[ParamId]) {
    for &id in ids {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = Tensor::zeros(shape);
    }
}

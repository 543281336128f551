//! Dense tensors, a reverse-mode autodiff tape, neural layers, losses and
//! optimizers.

mod archive;
pub mod nn;
mod optim;
mod params;
mod tape;
mod tensor;

pub use archive::{Archive, DType, Entry, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use nn::{Attention, Conv2d, Linear, Mlp};
pub use optim::{clip_grad_norm, Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{ParamGrads, ParamId, ParamStore, Parameter};
pub use tape::{ConvGeom, Gradients, Tape, Var, IGNORE_LABEL, LOG_EPS};
pub use tensor::Tensor;

/// Focal loss on a probability vector, evaluated without a tape.
pub fn focal_value(probs: &[f64], index: usize, gamma: f64) -> f64 {
    let p = probs[index].max(LOG_EPS);
    -(1.0 - p).powf(gamma) * p.ln()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

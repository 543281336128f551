//! Camera geometry, sinusoidal position encodings and k-means clustering.

mod camera;
mod kmeans;

pub use camera::{add, mat_mul, mat_vec, norm, sub, transpose, CameraModel, Mat3, Vec3, CAMERA_TO_EGO_AXES};
pub use kmeans::{kmeans, sse, KMeansConfig, KMeansResult, Point2};

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Range along the pixel ray used for pixels without valid depth (sky).
pub const SKY_SENTINEL_M: f64 = 200.0;

/// Frequency base of the sinusoidal encoding.
pub const PE_BASE: f64 = 10_000.0;

/// Sinusoidal encoding of the trailing coordinate axis.
///
/// Each of the `P` input coordinates gets `dim / P` channels laid out as
/// interleaved `(sin, cos)` pairs at frequencies `PE_BASE^(-2i / (dim/P))`;
/// the per-coordinate blocks are concatenated in coordinate order.
pub fn sinusoidal_pe(positions: &Tensor, dim: usize) -> Result<Tensor> {
    let p = *positions.shape().last().unwrap();
    if dim == 0 || dim % (2 * p) != 0 {
        return Err(Error::InvalidArgument(format!(
            "encoding width {dim} must be even and divisible by 2 x {p} coordinates"
        )));
    }
    let per_coord = dim / p;
    let freqs: Vec<f64> = (0..per_coord / 2).map(|i| PE_BASE.powf(-2.0 * i as f64 / per_coord as f64)).collect();
    let rows = positions.numel() / p;
    let mut data = Vec::with_capacity(rows * dim);
    for row in positions.data().chunks(p) {
        for &x in row {
            for &f in &freqs {
                data.push((x * f).sin());
                data.push((x * f).cos());
            }
        }
    }
    let mut shape = positions.shape().to_vec();
    *shape.last_mut().unwrap() = dim;
    Tensor::new(shape, data)
}

/// Ego-frame 3-D position of every feature cell of every view,
/// `[M, h, w, 3]` in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionMap(pub Tensor);

/// Back-projects per-view depth maps `[M, h, w]` through the rig. Cells
/// with non-positive or non-finite depth are placed [`SKY_SENTINEL_M`]
/// meters along their pixel ray.
pub fn position_maps(depth: &Tensor, rig: &[CameraModel]) -> Result<PositionMap> {
    let shape = depth.shape();
    if shape.len() != 3 || shape[0] != rig.len() {
        return Err(Error::ShapeMismatch { op: "position_maps", lhs: shape.to_vec(), rhs: vec![rig.len()] });
    }
    let (m, h, w) = (shape[0], shape[1], shape[2]);
    let mut data = Vec::with_capacity(m * h * w * 3);
    for (view, cam) in rig.iter().enumerate() {
        if cam.h != h || cam.w != w {
            return Err(Error::ShapeMismatch { op: "position_maps", lhs: shape.to_vec(), rhs: vec![cam.h, cam.w] });
        }
        for row in 0..h {
            for col in 0..w {
                let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
                let d = depth.get(&[view, row, col]);
                let p = if d > 0.0 && d.is_finite() {
                    cam.pixel_to_ego(u, v, d)?
                } else {
                    let ray = cam.pixel_ray_camera(u, v);
                    let scale = SKY_SENTINEL_M / norm(ray);
                    cam.camera_to_ego([ray[0] * scale, ray[1] * scale, ray[2] * scale])
                };
                data.extend_from_slice(&p);
            }
        }
    }
    Ok(PositionMap(Tensor::new([m, h, w, 3], data)?))
}

/// Per-command intention endpoints, `[3, K, 2]` meters in the ego frame.
/// Command order is left, straight, right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentionPointSet {
    pub k: usize,
    /// `3 * k` points, command-major.
    pub points: Vec<Point2>,
}

impl IntentionPointSet {
    pub fn for_command(&self, command_index: usize) -> &[Point2] {
        &self.points[command_index * self.k..(command_index + 1) * self.k]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([3, self.k, 2], self.points.iter().flatten().copied().collect()).expect("3 x K x 2 points")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 3 || s[2] != 2 {
            return Err(Error::InvalidShape { shape: s.to_vec(), reason: "intention points must be [3, K, 2]" });
        }
        Ok(Self { k: s[1], points: t.data().chunks(2).map(|c| [c[0], c[1]]).collect() })
    }
}

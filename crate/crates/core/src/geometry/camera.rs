use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Pinhole camera with a rigid camera-to-ego extrinsic.
///
/// Frames: ego is x forward, y left, z up with the origin at the rear-axle
/// centre on the ground; camera is z forward (optical axis), x right, y down.
/// Pixel `(u, v)` addresses continuous image coordinates, so the centre of
/// integer cell `(col, row)` sits at `(col + 0.5, row + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Image rows.
    pub h: usize,
    /// Image columns.
    pub w: usize,
    /// Columns are the camera axes expressed in the ego frame.
    pub rotation: Mat3,
    /// Camera centre in the ego frame, meters.
    pub translation: Vec3,
}

/// Axis permutation taking camera coordinates to ego coordinates for a
/// camera looking straight along ego +x.
pub const CAMERA_TO_EGO_AXES: Mat3 = [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]];

impl CameraModel {
    /// A camera at `translation` rotated by `yaw` (left positive) and pitched
    /// down by `pitch` radians, with horizontal field of view `hfov`.
    pub fn looking(yaw: f64, pitch: f64, translation: Vec3, hfov: f64, h: usize, w: usize) -> Result<Self> {
        let f = w as f64 / (2.0 * (hfov / 2.0).tan());
        let (cy_, sy) = (yaw.cos(), yaw.sin());
        let (cp, sp) = (pitch.cos(), pitch.sin());
        let rz = [[cy_, -sy, 0.0], [sy, cy_, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
        let rotation = mat_mul(&mat_mul(&rz, &ry), &CAMERA_TO_EGO_AXES);
        let cam = Self { fx: f, fy: f, cx: w as f64 / 2.0, cy: h as f64 / 2.0, h, w, rotation, translation };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        let r = &self.rotation;
        let rtr = mat_mul(&transpose(r), r);
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (v - expect).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("rotation is not orthonormal".into()));
                }
            }
        }
        if (det(r) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("rotation determinant is not +1".into()));
        }
        Ok(())
    }

    /// Same camera resampled to an image `factor` times larger per side.
    pub fn scaled(&self, factor: usize) -> Self {
        let s = factor as f64;
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            h: self.h * factor,
            w: self.w * factor,
            ..self.clone()
        }
    }

    /// Camera-frame direction of pixel `(u, v)` scaled to unit depth.
    pub fn pixel_ray_camera(&self, u: f64, v: f64) -> Vec3 {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    /// Ego-frame direction of pixel `(u, v)` scaled so that travelling `s`
    /// along it from the camera centre reaches camera depth `s`.
    pub fn pixel_ray_ego(&self, u: f64, v: f64) -> Vec3 {
        mat_vec(&self.rotation, &self.pixel_ray_camera(u, v))
    }

    pub fn camera_to_ego(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, &p), self.translation)
    }

    pub fn ego_to_camera(&self, p: Vec3) -> Vec3 {
        mat_vec(&transpose(&self.rotation), &sub(p, self.translation))
    }

    /// Back-projects pixel `(u, v)` at metric `depth` (distance along the
    /// optical axis) into the ego frame.
    pub fn pixel_to_ego(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::InvalidArgument(format!("depth must be positive, got {depth}")));
        }
        let ray = self.pixel_ray_camera(u, v);
        Ok(self.camera_to_ego([ray[0] * depth, ray[1] * depth, depth]))
    }

    /// Forward pinhole projection to `(u, v, depth)`; `None` behind the camera.
    pub fn ego_to_pixel(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let c = self.ego_to_camera(p);
        if c[2] <= 0.0 {
            return None;
        }
        Some((self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy, c[2]))
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

pub fn transpose(a: &Mat3) -> Mat3 {
    [0, 1, 2].map(|i| [a[0][i], a[1][i], a[2][i]])
}

fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

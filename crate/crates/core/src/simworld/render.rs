use serde::{Deserialize, Serialize};

use super::scene::{Scene, CLASS_BACKGROUND, CLASS_ROAD};
use super::shapes::Pose2;
use crate::diffcore::{Tensor, IGNORE_LABEL};
use crate::geometry::{CameraModel, Vec3};

/// Ground hits beyond this camera depth count as sky.
pub const MAX_DEPTH_M: f64 = 120.0;

const SKY_RGB: [f64; 3] = [150.0, 190.0, 235.0];
const CLASS_RGB: [[f64; 3]; 5] = [
    [95.0, 95.0, 105.0],
    [200.0, 40.0, 40.0],
    [240.0, 200.0, 40.0],
    [240.0, 120.0, 20.0],
    [60.0, 140.0, 60.0],
];

/// Camera placement shared by every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    /// Yaw of each camera, degrees, left positive.
    pub yaws_deg: Vec<f64>,
    /// Downward pitch, degrees.
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    /// Mount point in the ego frame, meters.
    pub mount: Vec3,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self { yaws_deg: vec![0.0, 55.0, -55.0], pitch_deg: 8.0, hfov_deg: 70.0, mount: [1.5, 0.0, 1.6] }
    }
}

impl RigConfig {
    /// Cameras at feature-map resolution `h x w`.
    pub fn build(&self, h: usize, w: usize) -> crate::Result<Vec<CameraModel>> {
        self.yaws_deg
            .iter()
            .map(|yaw| CameraModel::looking(yaw.to_radians(), self.pitch_deg.to_radians(), self.mount, self.hfov_deg.to_radians(), h, w))
            .collect()
    }
}

/// First surface along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals camera depth for unit-depth rays.
    pub depth: f64,
    /// World-frame point.
    pub point: Vec3,
    pub class_id: u8,
}

/// Casts a world-frame ray against the ground plane and the obstacle boxes
/// at time `t`.
pub fn cast_ray(scene: &Scene, origin: Vec3, dir: Vec3, t: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    if dir[2] < 0.0 {
        let s = -origin[2] / dir[2];
        if s > 0.0 && s <= MAX_DEPTH_M {
            let p = [origin[0] + s * dir[0], origin[1] + s * dir[1], 0.0];
            let class_id = if scene.road.contains([p[0], p[1]]) { CLASS_ROAD } else { CLASS_BACKGROUND };
            best = Some(Hit { depth: s, point: p, class_id });
        }
    }
    for obstacle in &scene.obstacles {
        let rect = obstacle.at(t);
        let (sn, cs) = rect.heading.sin_cos();
        let (dx, dy) = (origin[0] - rect.center[0], origin[1] - rect.center[1]);
        let o = [cs * dx + sn * dy, -sn * dx + cs * dy, origin[2]];
        let d = [cs * dir[0] + sn * dir[1], -sn * dir[0] + cs * dir[1], dir[2]];
        let lo = [-rect.length / 2.0, -rect.width / 2.0, 0.0];
        let hi = [rect.length / 2.0, rect.width / 2.0, obstacle.height];
        let (mut enter, mut exit) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut miss = false;
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if o[a] < lo[a] || o[a] > hi[a] {
                    miss = true;
                    break;
                }
            } else {
                let (t0, t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
                enter = enter.max(t0.min(t1));
                exit = exit.min(t0.max(t1));
            }
        }
        if miss || enter > exit || enter <= 1e-9 {
            continue;
        }
        if best.is_none_or(|b| enter < b.depth) {
            let p = [origin[0] + enter * dir[0], origin[1] + enter * dir[1], origin[2] + enter * dir[2]];
            best = Some(Hit { depth: enter, point: p, class_id: obstacle.class_id });
        }
    }
    best
}

fn world_ray(cam: &CameraModel, pose: &Pose2, u: f64, v: f64) -> (Vec3, Vec3) {
    let o = pose.to_world([cam.translation[0], cam.translation[1]]);
    let d = cam.pixel_ray_ego(u, v);
    let (s, c) = pose.heading.sin_cos();
    ([o[0], o[1], cam.translation[2]], [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]])
}

fn shade(scene: &Scene, hit: Option<Hit>) -> [u8; 3] {
    let Some(hit) = hit else {
        return SKY_RGB.map(|c| c as u8);
    };
    let mut rgb = CLASS_RGB[hit.class_id as usize];
    let mut k = 1.0 - 0.5 * (hit.depth / 60.0).min(1.0);
    if hit.point[2] == 0.0 {
        let cell = (hit.point[0] / 2.0).floor() as i64 + (hit.point[1] / 2.0).floor() as i64;
        if cell.rem_euclid(2) == 1 {
            k *= 0.85;
        }
        if hit.class_id == CLASS_ROAD && scene.road.offset([hit.point[0], hit.point[1]]) > scene.road.width / 2.0 - 0.3 {
            rgb = [235.0, 235.0, 235.0];
        }
    }
    rgb.map(|c| (c * k).round().clamp(0.0, 255.0) as u8)
}

/// Rendered views of one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    /// `[M, H, W, 3]` RGB, row-major.
    pub images: Vec<u8>,
    /// `[M, h, w]` camera depth, 0 where nothing is hit.
    pub depth: Tensor,
    /// `M·h·w` class ids, [`IGNORE_LABEL`] for sky.
    pub semantics: Vec<u8>,
    /// Ego-frame first-hit point per feature cell.
    pub hits: Vec<Option<Vec3>>,
}

/// Ray-casts every view. Depth and semantics are sampled at the centres of
/// the feature-resolution cameras in `rig`; images use the same cameras
/// scaled up by `upsample`.
pub fn render_frame(scene: &Scene, pose: &Pose2, t: f64, rig: &[CameraModel], upsample: usize) -> RenderedFrame {
    let (h, w) = (rig[0].h, rig[0].w);
    let mut images = Vec::with_capacity(rig.len() * h * w * upsample * upsample * 3);
    let mut depth = Vec::with_capacity(rig.len() * h * w);
    let mut semantics = Vec::with_capacity(rig.len() * h * w);
    let mut hits = Vec::with_capacity(rig.len() * h * w);
    for cam in rig {
        for row in 0..h {
            for col in 0..w {
                let (o, d) = world_ray(cam, pose, col as f64 + 0.5, row as f64 + 0.5);
                match cast_ray(scene, o, d, t) {
                    Some(hit) => {
                        depth.push(hit.depth);
                        semantics.push(hit.class_id);
                        let local = pose.to_local([hit.point[0], hit.point[1]]);
                        hits.push(Some([local[0], local[1], hit.point[2]]));
                    }
                    None => {
                        depth.push(0.0);
                        semantics.push(IGNORE_LABEL);
                        hits.push(None);
                    }
                }
            }
        }
        let big = cam.scaled(upsample);
        for row in 0..big.h {
            for col in 0..big.w {
                let (o, d) = world_ray(&big, pose, col as f64 + 0.5, row as f64 + 0.5);
                images.extend_from_slice(&shade(scene, cast_ray(scene, o, d, t)));
            }
        }
    }
    let depth = Tensor::new([rig.len(), h, w], depth).expect("one depth per cell");
    RenderedFrame { images, depth, semantics, hits }
}

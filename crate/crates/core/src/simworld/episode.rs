use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_frame, RigConfig};
use super::scene::{
    ego_rect, motion_profiles, MotionProfile, Obstacle, Road, Scene, CLASS_BARRIER, CLASS_PEDESTRIAN, CLASS_VEHICLE,
    EGO_WIDTH,
};
use super::shapes::{OrientedRect, Pose2};
use crate::diffcore::Tensor;
use crate::encoders::{Command, FrameInput, PriorProvider, DOWNSAMPLE};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;

/// Episode generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub frames: usize,
    /// Seconds per frame.
    pub dt: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    /// Relative weights of left, straight and right manoeuvres.
    pub maneuver_mix: [f64; 3],
    /// Rendered image side, pixels.
    pub image_size: usize,
    pub waypoints: usize,
    /// Future-frame gap the corpus must support.
    pub horizon: usize,
    /// Fixed road width in meters; by default it follows the manoeuvre speed.
    pub road_width: Option<f64>,
    /// Fraction of vehicles that move along their heading.
    pub moving_fraction: f64,
    pub world_bound: f64,
    pub rig: RigConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            frames: 40,
            dt: 0.5,
            min_obstacles: 2,
            max_obstacles: 6,
            maneuver_mix: [1.0, 1.0, 1.0],
            image_size: 64,
            waypoints: 6,
            horizon: 3,
            road_width: None,
            moving_fraction: 0.3,
            world_bound: 200.0,
            rig: RigConfig::default(),
        }
    }
}

impl GenConfig {
    pub fn feature_size(&self) -> usize {
        self.image_size / DOWNSAMPLE
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        if self.frames < self.waypoints + self.horizon + 1 {
            return bad(format!(
                "{} frames cannot hold a {}-waypoint expert horizon and a {}-frame future gap",
                self.frames, self.waypoints, self.horizon
            ));
        }
        if !(self.dt > 0.0) {
            return bad(format!("frame interval {} must be positive", self.dt));
        }
        if self.min_obstacles > self.max_obstacles {
            return bad(format!("obstacle range {}..={} is empty", self.min_obstacles, self.max_obstacles));
        }
        if self.image_size == 0 || self.image_size % DOWNSAMPLE != 0 {
            return bad(format!("image size {} must be a positive multiple of {DOWNSAMPLE}", self.image_size));
        }
        if self.maneuver_mix.iter().any(|w| !(*w >= 0.0)) || self.maneuver_mix.iter().sum::<f64>() <= 0.0 {
            return bad(format!("manoeuvre mix {:?} needs non-negative weights with a positive sum", self.maneuver_mix));
        }
        if let Some(w) = self.road_width {
            if !(w > EGO_WIDTH) {
                return bad(format!("road width {w} m is narrower than the {EGO_WIDTH} m ego vehicle"));
            }
        }
        if self.rig.yaws_deg.is_empty() {
            return bad("the camera rig needs at least one camera".into());
        }
        if !(0.0..=1.0).contains(&self.moving_fraction) {
            return bad(format!("moving fraction {} outside [0, 1]", self.moving_fraction));
        }
        Ok(())
    }

    /// Feature-resolution cameras.
    pub fn build_rig(&self) -> Result<Vec<CameraModel>> {
        self.rig.build(self.feature_size(), self.feature_size())
    }
}

/// One rendered timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObservation {
    pub t: usize,
    /// `[M, H, W, 3]`.
    pub image_shape: [usize; 4],
    pub images: Vec<u8>,
    /// `[M, h, w]` meters, 0 where nothing is hit.
    pub depth: Tensor,
    /// `M·h·w` class ids.
    pub semantics: Vec<u8>,
    pub command: Command,
    /// `[S, 2]` meters in this frame's ego frame.
    pub expert: Tensor,
    pub ego_pose: Pose2,
}

impl FrameObservation {
    /// Images scaled to `[0, 1]`.
    pub fn image_tensor(&self) -> Tensor {
        Tensor::new(self.image_shape, self.images.iter().map(|&b| b as f64 / 255.0).collect()).expect("validated image shape")
    }

    pub fn expert_points(&self) -> Vec<[f64; 2]> {
        self.expert.data().chunks(2).map(|c| [c[0], c[1]]).collect()
    }
}

/// Image tensor plus depth of a frame, owned so a [`FrameInput`] can
/// borrow them.
#[derive(Clone, Debug)]
pub struct PreparedFrame {
    pub images: Tensor,
    pub depth: Tensor,
}

impl PreparedFrame {
    pub fn new<P: PriorProvider<Frame = FrameObservation>>(frame: &FrameObservation, priors: &P) -> Self {
        Self { images: frame.image_tensor(), depth: priors.depth_of(frame) }
    }

    pub fn input(&self) -> FrameInput<'_> {
        FrameInput { images: &self.images, depth: &self.depth }
    }
}

/// Exact simulator depth and semantics.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruthPriors;

impl PriorProvider for GroundTruthPriors {
    type Frame = FrameObservation;

    fn depth_of(&self, frame: &FrameObservation) -> Tensor {
        frame.depth.clone()
    }

    fn semantics_of(&self, frame: &FrameObservation) -> Vec<u8> {
        frame.semantics.clone()
    }
}

/// A generated scene with its rendered frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub maneuver: Command,
    /// Index into [`motion_profiles`] for the manoeuvre.
    pub profile_index: usize,
    pub profile: MotionProfile,
    pub dt: f64,
    pub scene: Scene,
    /// Feature-resolution cameras; images use them scaled by [`DOWNSAMPLE`].
    pub rig: Vec<CameraModel>,
    pub frames: Vec<FrameObservation>,
}

impl Episode {
    /// Ego footprint on the expert path at time `t`.
    pub fn ego_footprint(&self, t: f64) -> OrientedRect {
        let p = self.profile.pose_at(t);
        ego_rect([p.x, p.y], p.heading)
    }

    /// Frames with a full expert horizon and a future frame `horizon` ahead.
    pub fn trainable_frames(&self, waypoints: usize, horizon: usize) -> std::ops::Range<usize> {
        let reach = waypoints.max(horizon);
        0..self.frames.len().saturating_sub(reach)
    }
}

struct ObstacleKind {
    class_id: u8,
    length: f64,
    width: f64,
    height: f64,
}

const KINDS: [ObstacleKind; 3] = [
    ObstacleKind { class_id: CLASS_VEHICLE, length: 4.2, width: 1.8, height: 1.5 },
    ObstacleKind { class_id: CLASS_PEDESTRIAN, length: 0.6, width: 0.6, height: 1.7 },
    ObstacleKind { class_id: CLASS_BARRIER, length: 2.0, width: 0.5, height: 1.0 },
];

fn place_obstacles(
    rng: &mut ChaCha8Rng,
    config: &GenConfig,
    profile: &MotionProfile,
    road: &Road,
    count: usize,
) -> Result<Vec<Obstacle>> {
    let ticks = config.frames + config.waypoints;
    let path: Vec<OrientedRect> = (0..ticks)
        .map(|k| {
            let p = profile.pose_at(k as f64 * config.dt);
            OrientedRect { length: 4.8, width: 2.6, ..ego_rect([p.x, p.y], p.heading) }
        })
        .collect();
    let reach = profile.speed * config.dt * ticks as f64;
    let mut placed: Vec<Obstacle> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = None;
        for _ in 0..500 {
            let kind = &KINDS[rng.gen_range(0..KINDS.len())];
            let s = rng.gen_range(6.0..reach.clamp(12.0, 60.0));
            let anchor = profile.pose_at(s / profile.speed);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = side * rng.gen_range(2.5..road.width / 2.0 + 3.0);
            let (sn, cs) = anchor.heading.sin_cos();
            let center = [anchor.x - sn * lateral, anchor.y + cs * lateral];
            let (heading, speed) = if kind.class_id == CLASS_VEHICLE {
                let flip = if rng.gen_bool(0.5) { std::f64::consts::PI } else { 0.0 };
                let moving = rng.gen_bool(config.moving_fraction);
                (anchor.heading + flip, if moving { rng.gen_range(0.5..2.0) } else { 0.0 })
            } else {
                (rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI), 0.0)
            };
            let obstacle = Obstacle {
                footprint: OrientedRect { center, length: kind.length, width: kind.width, heading },
                height: kind.height,
                speed,
                class_id: kind.class_id,
            };
            let hits_ego = path.iter().enumerate().any(|(k, ego)| ego.overlaps(&obstacle.at(k as f64 * config.dt)));
            let hits_other = placed.iter().any(|o| o.footprint.overlaps(&obstacle.footprint));
            let in_bounds = center[0].abs() < config.world_bound && center[1].abs() < config.world_bound;
            if !hits_ego && !hits_other && in_bounds {
                accepted = Some(obstacle);
                break;
            }
        }
        placed.push(accepted.ok_or_else(|| Error::InfeasibleConfig("could not place a collision-free obstacle".into()))?);
    }
    Ok(placed)
}

/// Generates a fully deterministic episode from `seed`.
pub fn generate_episode(config: &GenConfig, seed: u64) -> Result<Episode> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = config.maneuver_mix.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    let mut maneuver = Command::Right;
    for (c, w) in Command::ALL.iter().zip(config.maneuver_mix) {
        if pick < w {
            maneuver = *c;
            break;
        }
        pick -= w;
    }
    let profile_index = rng.gen_range(0..6);
    let profile = motion_profiles(maneuver)[profile_index];
    let road = Road { curvature: profile.yaw_rate / profile.speed, width: config.road_width.unwrap_or(profile.road_width()) };
    let count = rng.gen_range(config.min_obstacles..=config.max_obstacles);
    let obstacles = place_obstacles(&mut rng, config, &profile, &road, count)?;
    let scene = Scene { road, obstacles, world_bound: config.world_bound };
    let rig = config.build_rig()?;
    let views = rig.len();
    let frames = (0..config.frames)
        .map(|t| {
            let time = t as f64 * config.dt;
            let pose = profile.pose_at(time);
            let r = render_frame(&scene, &pose, time, &rig, DOWNSAMPLE);
            let expert: Vec<f64> = profile.future_waypoints(time, config.dt, config.waypoints).into_iter().flatten().collect();
            FrameObservation {
                t,
                image_shape: [views, config.image_size, config.image_size, 3],
                images: r.images,
                depth: r.depth,
                semantics: r.semantics,
                command: maneuver,
                expert: Tensor::new([config.waypoints, 2], expert).expect("S x 2 waypoints"),
                ego_pose: pose,
            }
        })
        .collect();
    Ok(Episode { seed, maneuver, profile_index, profile, dt: config.dt, scene, rig, frames })
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::shapes::{OrientedRect, Pose2};
use crate::encoders::{Command, TrajectoryVocabulary};
use crate::error::Result;
use crate::geometry::Point2;

pub const CLASS_ROAD: u8 = 0;
pub const CLASS_VEHICLE: u8 = 1;
pub const CLASS_PEDESTRIAN: u8 = 2;
pub const CLASS_BARRIER: u8 = 3;
pub const CLASS_BACKGROUND: u8 = 4;
pub const CLASS_NAMES: [&str; 5] = ["road", "vehicle", "pedestrian", "barrier", "background"];

/// Ego collision footprint, meters.
pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 1.85;

/// Constant speed and yaw rate of one scripted manoeuvre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    /// m/s.
    pub speed: f64,
    /// rad/s, positive turns left.
    pub yaw_rate: f64,
}

impl MotionProfile {
    /// World pose after `t` seconds starting at the origin facing +x.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        let (v, w) = (self.speed, self.yaw_rate);
        if w.abs() < 1e-12 {
            Pose2::new(v * t, 0.0, 0.0)
        } else {
            let th = w * t;
            Pose2::new(v / w * th.sin(), v / w * (1.0 - th.cos()), th)
        }
    }

    /// Waypoints at `dt, 2dt, .., s·dt` after `t`, in the ego frame at `t`.
    pub fn future_waypoints(&self, t: f64, dt: f64, s: usize) -> Vec<Point2> {
        let here = self.pose_at(t);
        (1..=s)
            .map(|k| {
                let p = self.pose_at(t + k as f64 * dt);
                here.to_local([p.x, p.y])
            })
            .collect()
    }

    /// Road width shown for this profile: faster profiles drive wider roads.
    pub fn road_width(&self) -> f64 {
        2.0 * self.speed + 1.5
    }
}

const TURN_CURVATURES: [f64; 6] = [0.25, 0.16, 0.11, 0.075, 0.05, 0.035];
const SPEEDS: [f64; 6] = [2.5, 3.2, 4.0, 4.8, 5.4, 5.8];

/// The six manoeuvres available under each command.
pub fn motion_profiles(command: Command) -> [MotionProfile; 6] {
    std::array::from_fn(|i| {
        let v = SPEEDS[i];
        let yaw_rate = match command {
            Command::Straight => 0.0,
            Command::Left => TURN_CURVATURES[i] * v,
            Command::Right => -TURN_CURVATURES[i] * v,
        };
        MotionProfile { speed: v, yaw_rate }
    })
}

/// Vocabulary drawn from the manoeuvre profiles with small speed and
/// yaw-rate jitter, cycling commands and profiles evenly.
pub fn generate_vocabulary(n: usize, s: usize, dt: f64, seed: u64) -> Result<TrajectoryVocabulary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * s * 2);
    for i in 0..n {
        let command = Command::ALL[i % 3];
        let base = motion_profiles(command)[(i / 3) % 6];
        let yaw_jitter = if command == Command::Straight { 0.004 } else { 0.008 };
        let profile = MotionProfile {
            speed: base.speed + rng.gen_range(-0.08..0.08),
            yaw_rate: base.yaw_rate + rng.gen_range(-yaw_jitter..yaw_jitter),
        };
        for p in profile.future_waypoints(0.0, dt, s) {
            data.extend_from_slice(&p);
        }
    }
    TrajectoryVocabulary::new(n, s, data)
}

/// Drivable corridor following the scripted ego path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Road {
    /// Signed curvature (1/m) of the centreline, which starts at the origin
    /// facing +x; zero is a straight road.
    pub curvature: f64,
    pub width: f64,
}

impl Road {
    /// Distance from the centreline.
    pub fn offset(&self, p: Point2) -> f64 {
        if self.curvature.abs() < 1e-12 {
            p[1].abs()
        } else {
            let r = 1.0 / self.curvature;
            ((p[0]).hypot(p[1] - r) - r.abs()).abs()
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.offset(p) <= self.width / 2.0
    }
}

/// Box obstacle moving at constant velocity along its heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Footprint at time zero.
    pub footprint: OrientedRect,
    pub height: f64,
    /// m/s along the heading.
    pub speed: f64,
    pub class_id: u8,
}

impl Obstacle {
    pub fn at(&self, t: f64) -> OrientedRect {
        let [a, _] = self.footprint.axes();
        let d = self.speed * t;
        OrientedRect { center: [self.footprint.center[0] + a[0] * d, self.footprint.center[1] + a[1] * d], ..self.footprint }
    }
}

/// Static description of an episode's world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub road: Road,
    pub obstacles: Vec<Obstacle>,
    /// Half extent of the square world, meters.
    pub world_bound: f64,
}

/// Ego footprint centred on a pose.
pub fn ego_rect(center: Point2, heading: f64) -> OrientedRect {
    OrientedRect { center, length: EGO_LENGTH, width: EGO_WIDTH, heading }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turning_profiles_end_on_the_right_side() {
        for (cmd, sign) in [(Command::Left, 1.0), (Command::Right, -1.0)] {
            for p in motion_profiles(cmd) {
                let end = *p.future_waypoints(0.0, 0.5, 6).last().unwrap();
                assert!(end[1] * sign > 4.0, "{cmd:?} {p:?} ends at {end:?}");
            }
        }
    }

    #[test]
    fn waypoints_are_pose_invariant_along_an_arc() {
        let p = motion_profiles(Command::Left)[2];
        let a = p.future_waypoints(0.0, 0.5, 6);
        let b = p.future_waypoints(7.5, 0.5, 6);
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn road_follows_the_arc() {
        let p = motion_profiles(Command::Right)[1];
        let road = Road { curvature: p.yaw_rate / p.speed, width: p.road_width() };
        for t in [0.0, 3.0, 11.0] {
            let pose = p.pose_at(t);
            assert!(road.offset([pose.x, pose.y]) < 1e-9);
        }
    }
}

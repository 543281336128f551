use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// Planar pose in the world frame: position in meters, heading in radians
/// counter-clockwise from world +x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Ego-frame point to world frame.
    pub fn to_world(&self, p: Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// World-frame point to this pose's ego frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// Rectangle with `length` along `heading` and `width` across it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedRect {
    pub fn axes(&self) -> [Point2; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [Point2; 4] {
        let [a, b] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let at = |sl: f64, sw: f64| {
            [self.center[0] + a[0] * hl * sl + b[0] * hw * sw, self.center[1] + a[1] * hl * sl + b[1] * hw * sw]
        };
        [at(1.0, 1.0), at(-1.0, 1.0), at(-1.0, -1.0), at(1.0, -1.0)]
    }

    /// Point in this rectangle's local frame (x along heading).
    pub fn local(&self, p: Point2) -> Point2 {
        Pose2::new(self.center[0], self.center[1], self.heading).to_local(p)
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point2) -> bool {
        let l = self.local(p);
        l[0].abs() <= self.length / 2.0 && l[1].abs() <= self.width / 2.0
    }

    /// Separating-axis overlap test; touching rectangles overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let (ca, cb) = (self.corners(), other.corners());
        for axis in self.axes().into_iter().chain(other.axes()) {
            let project = |cs: &[Point2; 4]| {
                cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let d = c[0] * axis[0] + c[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (a, b) = (project(&ca), project(&cb));
            if a.1 < b.0 || b.1 < a.0 {
                return false;
            }
        }
        true
    }
}

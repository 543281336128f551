use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::scene::ego_rect;
use crate::geometry::Point2;

/// Evaluation horizons, seconds.
pub const HORIZONS_S: [f64; 3] = [1.0, 2.0, 3.0];

/// Open-loop metrics: L2 in meters, collision rates in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l2_1s: f64,
    pub l2_2s: f64,
    pub l2_3s: f64,
    pub l2_avg: f64,
    pub cr_1s: f64,
    pub cr_2s: f64,
    pub cr_3s: f64,
    pub cr_avg: f64,
    pub samples: usize,
    pub skipped: usize,
}

/// Per-frame errors at each horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub frame: usize,
    pub l2: [f64; 3],
    pub collision: [bool; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeEvaluation {
    pub samples: Vec<SampleMetrics>,
    /// Predictions whose horizon runs past the episode.
    pub skipped: usize,
}

/// Waypoint index reached `seconds` after the current frame.
pub fn horizon_index(seconds: f64, dt: f64) -> usize {
    ((seconds / dt).round() as usize).saturating_sub(1)
}

/// Heading of each waypoint from the segment leaving it; the last waypoint
/// reuses the previous segment and degenerate segments inherit the prior
/// heading (or zero for the first).
pub fn waypoint_headings(points: &[Point2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut last = 0.0;
    for i in 0..points.len() {
        let (a, b) = if i + 1 < points.len() {
            (points[i], points[i + 1])
        } else if i > 0 {
            (points[i - 1], points[i])
        } else {
            out.push(last);
            continue;
        };
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        if dx.hypot(dy) > 1e-9 {
            last = dy.atan2(dx);
        }
        out.push(last);
    }
    out
}

/// Whether the ego footprint at waypoint `index` of `trajectory` (ego frame
/// of frame `t`) overlaps an obstacle at that waypoint's time.
pub fn collides_at(episode: &Episode, t: usize, trajectory: &[Point2], index: usize) -> bool {
    let pose = episode.profile.pose_at(t as f64 * episode.dt);
    let heading = waypoint_headings(trajectory)[index];
    let center = pose.to_world(trajectory[index]);
    let ego = ego_rect(center, pose.heading + heading);
    let time = (t + index + 1) as f64 * episode.dt;
    episode.scene.obstacles.iter().any(|o| ego.overlaps(&o.at(time)))
}

/// Scores per-frame predicted trajectories against the expert.
pub fn evaluate_plan(episode: &Episode, predictions: &[(usize, Vec<Point2>)]) -> EpisodeEvaluation {
    let mut eval = EpisodeEvaluation::default();
    let indices = HORIZONS_S.map(|s| horizon_index(s, episode.dt));
    let need = indices.iter().max().unwrap() + 1;
    for (t, traj) in predictions {
        let t = *t;
        if t >= episode.frames.len() || t + need >= episode.frames.len() || traj.len() < need {
            eval.skipped += 1;
            continue;
        }
        let expert = episode.frames[t].expert_points();
        if expert.len() < need {
            eval.skipped += 1;
            continue;
        }
        let l2 = indices.map(|i| (traj[i][0] - expert[i][0]).hypot(traj[i][1] - expert[i][1]));
        let collision = indices.map(|i| collides_at(episode, t, traj, i));
        eval.samples.push(SampleMetrics { frame: t, l2, collision });
    }
    eval
}

/// Means over samples; collision rates in percent.
pub fn aggregate(samples: &[SampleMetrics], skipped: usize) -> MetricsReport {
    let n = samples.len();
    if n == 0 {
        return MetricsReport { skipped, ..Default::default() };
    }
    let mean = |f: &dyn Fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n as f64;
    let l2: [f64; 3] = std::array::from_fn(|i| mean(&|s| s.l2[i]));
    let cr: [f64; 3] = std::array::from_fn(|i| 100.0 * mean(&|s| if s.collision[i] { 1.0 } else { 0.0 }));
    MetricsReport {
        l2_1s: l2[0],
        l2_2s: l2[1],
        l2_3s: l2[2],
        l2_avg: l2.iter().sum::<f64>() / 3.0,
        cr_1s: cr[0],
        cr_2s: cr[1],
        cr_3s: cr[2],
        cr_avg: cr.iter().sum::<f64>() / 3.0,
        samples: n,
        skipped,
    }
}

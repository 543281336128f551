use serde::{Deserialize, Serialize};

use crate::diffcore::{argmin, Tape, Tensor};
use crate::encoders::Command;
use crate::error::Result;
use crate::geometry::Point2;
use crate::par::par_map;
use crate::simworld::{aggregate, evaluate_plan, Episode, GroundTruthPriors, MetricsReport, PreparedFrame, SampleMetrics};
use crate::worldmodel::WorldModel;

/// One scored prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode: usize,
    pub frame: usize,
    pub command: Command,
    /// Modality picked by the score network.
    pub j: usize,
    /// Modality whose predicted latent is closest to the observed future
    /// latent; absent when the future frame is outside the episode.
    pub closest: Option<usize>,
    pub l2: [f64; 3],
    pub collision: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    /// Fraction of records where `j == closest`.
    pub selector_agreement: Option<f64>,
    pub records: Vec<EvalRecord>,
}

/// Frames of `episode` that can be scored at every horizon.
pub fn scorable_frames(episode: &Episode, waypoints: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..episode.frames.len().saturating_sub(waypoints)).step_by(stride.max(1))
}

/// Scores an arbitrary planner `f(episode, frame) -> (trajectory, j, closest)`.
/// Episodes are evaluated in parallel.
pub fn evaluate_with<F>(episodes: &[Episode], waypoints: usize, stride: usize, f: F) -> Result<EvalReport>
where
    F: Fn(&Episode, usize) -> Result<(Vec<Point2>, usize, Option<usize>)> + Sync,
{
    let per_episode = par_map(episodes, |e, ep| -> Result<(Vec<EvalRecord>, Vec<SampleMetrics>, usize)> {
        let mut predictions = Vec::new();
        let mut picks = Vec::new();
        for t in scorable_frames(ep, waypoints, stride) {
            let (traj, j, closest) = f(ep, t)?;
            predictions.push((t, traj));
            picks.push((j, closest));
        }
        let eval = evaluate_plan(ep, &predictions);
        let records = eval
            .samples
            .iter()
            .map(|s| {
                let (j, closest) = picks[predictions.iter().position(|(t, _)| *t == s.frame).unwrap()];
                EvalRecord {
                    episode: e,
                    frame: s.frame,
                    command: ep.frames[s.frame].command,
                    j,
                    closest,
                    l2: s.l2,
                    collision: s.collision,
                }
            })
            .collect();
        Ok((records, eval.samples, eval.skipped))
    });
    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for part in per_episode {
        let (r, s, k) = part?;
        records.extend(r);
        samples.extend(s);
        skipped += k;
    }
    let judged: Vec<_> = records.iter().filter_map(|r| r.closest.map(|c| c == r.j)).collect();
    let selector_agreement =
        (!judged.is_empty()).then(|| judged.iter().filter(|&&b| b).count() as f64 / judged.len() as f64);
    Ok(EvalReport { metrics: aggregate(&samples, skipped), selector_agreement, records })
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.numel() as f64
}

/// Open-loop evaluation of `model`. Each prediction sees frames up to `t`
/// only; the future frame is used solely to measure selector agreement.
pub fn evaluate_model(model: &WorldModel, episodes: &[Episode], stride: usize) -> Result<EvalReport> {
    let n = model.config.horizon;
    let priors = GroundTruthPriors;
    evaluate_with(episodes, model.config.waypoints, stride, |ep, t| {
        let current = PreparedFrame::new(&ep.frames[t], &priors);
        let previous = (t > 0).then(|| PreparedFrame::new(&ep.frames[t - 1], &priors));
        let command = ep.frames[t].command;
        let mut tape = Tape::no_grad();
        let enc = model.encode(&mut tape, current.input(), previous.as_ref().map(|p| p.input()), &ep.rig, t)?;
        let bundle = model.plan_bundle(&mut tape, &enc.latent, command)?;
        let plan = model.result_from_bundle(&tape, &bundle, command, t);
        let closest = if t + n < ep.frames.len() {
            let future = PreparedFrame::new(&ep.frames[t + n], &priors);
            let future_prev = PreparedFrame::new(&ep.frames[t + n - 1], &priors);
            let target = model.target_latent(future.input(), Some(future_prev.input()), &ep.rig)?;
            let d: Vec<f64> = bundle.predicted.iter().map(|&p| mse(tape.value(p), &target)).collect();
            Some(argmin(&d))
        } else {
            None
        };
        Ok((plan.trajectory, plan.j, closest))
    })
}

/// Replays the expert trajectory; zero L2 by construction.
pub fn evaluate_expert(episodes: &[Episode], waypoints: usize, stride: usize) -> Result<EvalReport> {
    evaluate_with(episodes, waypoints, stride, |ep, t| Ok((ep.frames[t].expert_points(), 0, None)))
}

//! Open-loop L2 and collision rate of the expert, an untrained model and a
//! constant-velocity baseline on the same episodes.

use intentdrive::harness::{evaluate_expert, evaluate_model, evaluate_with, RunConfig, TrainState};
use intentdrive::simworld::generate_corpus;

fn main() -> intentdrive::Result<()> {
    let config = RunConfig::desk();
    let episodes = generate_corpus(&config.gen, 100, 4)?;
    let s = config.model.waypoints;

    let expert = evaluate_expert(&episodes, s, 2)?;
    let untrained = evaluate_model(&TrainState::new(&config)?.model, &episodes, 2)?;
    // Keep driving straight at the speed implied by the first expert waypoint.
    let straight = evaluate_with(&episodes, s, 2, |ep, t| {
        let first = ep.frames[t].expert.data()[0];
        Ok(((1..=s).map(|i| [first * i as f64, 0.0]).collect(), 0, None))
    })?;

    for (name, r) in [("expert", expert), ("untrained", untrained), ("straight", straight)] {
        let m = r.metrics;
        println!(
            "{name:<10} L2 {:.2}/{:.2}/{:.2} avg {:.2} m   CR avg {:.2} %",
            m.l2_1s, m.l2_2s, m.l2_3s, m.l2_avg, m.cr_avg
        );
    }
    Ok(())
}

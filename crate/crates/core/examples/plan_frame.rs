//! Plan one frame with a freshly initialised model and write the top-down
//! figure of all candidate trajectories.

use intentdrive::harness::{plan_svg, RunConfig, TrainState};
use intentdrive::simworld::{generate_episode, GroundTruthPriors, PreparedFrame};

fn main() -> intentdrive::Result<()> {
    let config = RunConfig::desk();
    let state = TrainState::new(&config)?;
    let ep = generate_episode(&config.gen, 5)?;
    let t = 12;
    let prepared: Vec<_> = (t - 1..=t).map(|i| PreparedFrame::new(&ep.frames[i], &GroundTruthPriors)).collect();
    let history: Vec<_> = prepared.iter().map(|p| p.input()).collect();
    let plan = state.model.infer_plan(&history, &ep.rig, ep.frames[t].command, t)?;
    println!("command {}  selected {}", plan.command.name(), plan.j);
    for (i, (score, c)) in plan.scores.iter().zip(&plan.candidates).enumerate() {
        let end = c.last().unwrap();
        println!("  {i}: score {score:.3}  endpoint ({:.1}, {:.1})", end[0], end[1]);
    }
    std::fs::write("plan.svg", plan_svg(&ep, t, &plan)).map_err(intentdrive::Error::io("plan.svg"))?;
    println!("wrote plan.svg");
    Ok(())
}

//! Train a reduced model for a few hundred steps and print the loss terms.

use intentdrive::harness::{train, RunConfig, TrainState};
use intentdrive::simworld::generate_corpus;

fn main() -> intentdrive::Result<()> {
    let mut config = RunConfig::desk();
    config.gen.image_size = 32;
    config.model.image_h = 32;
    config.model.image_w = 32;
    config.model.dim = 32;
    let episodes = generate_corpus(&config.gen, 0, 8)?;
    let mut state = TrainState::new(&config)?;
    let records = train(&config, &mut state, &episodes, 200, None, None)?;
    for r in records.iter().step_by(20) {
        let l = &r.losses;
        println!(
            "step {:>4}  total {:.4}  traj {:.4}  recon {:.4}  score {:.4}  sem {:.4}",
            r.step, l.total, l.traj, l.recon, l.score, l.sem
        );
    }
    Ok(())
}

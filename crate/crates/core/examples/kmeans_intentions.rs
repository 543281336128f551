//! Build the trajectory vocabulary and cluster each command's endpoints
//! into K intention points.

use intentdrive::encoders::{build_intention_points, Command};
use intentdrive::simworld::generate_vocabulary;

fn main() -> intentdrive::Result<()> {
    let vocab = generate_vocabulary(8192, 6, 0.5, 0)?;
    let groups = vocab.partition_endpoints(1.0);
    let points = build_intention_points(&vocab, 6, 0, 1.0)?;
    for c in Command::ALL {
        println!("{:<8} {:>5} endpoints", c.name(), groups[c.index()].len());
        for p in points.for_command(c.index()) {
            println!("    ({:>6.2}, {:>6.2})", p[0], p[1]);
        }
    }
    Ok(())
}

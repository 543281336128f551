//! Generate a small synthetic corpus, write it to disk and read it back.
//!
//! cargo run --example gen_corpus -- /tmp/corpus 8

use intentdrive::harness::RunConfig;
use intentdrive::simworld::{generate_corpus, read_corpus, write_corpus};

fn main() -> intentdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "corpus".into());
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let config = RunConfig::desk();
    let episodes = generate_corpus(&config.gen, 0, n)?;
    let index = write_corpus(out.as_ref(), &config.gen, &episodes)?;
    let (_, back) = read_corpus(out.as_ref())?;
    assert_eq!(back.len(), n);
    for ep in &episodes {
        println!(
            "seed {:>20}  {:<8} profile {}  {} frames  {} obstacles",
            ep.seed,
            ep.maneuver.name(),
            ep.profile_index,
            ep.frames.len(),
            ep.scene.obstacles.len()
        );
    }
    let c = index.counts;
    println!("left {} straight {} right {} -> {}", c.left, c.straight, c.right, out);
    Ok(())
}

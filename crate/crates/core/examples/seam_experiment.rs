//! Train zero-padding and mirror-padding models under the same budget and
//! compare the seams their tiled outputs leave on a held-out scene.
//!
//! cargo run --release --example seam_experiment -- [steps]

use srtile::experiments::{seam_experiment, SeamExperiment};

fn main() -> srtile::Result<()> {
    let mut exp = SeamExperiment::default();
    if let Some(steps) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        exp.train.max_steps = Some(steps);
    }
    let t = std::time::Instant::now();
    let trials = seam_experiment(&exp)?;
    println!("seed    input     zero   mirror");
    for tr in &trials {
        println!(
            "{:>4} {:>8.4} {:>8.4} {:>8.4}{}",
            tr.seed,
            tr.input,
            tr.zero,
            tr.mirror,
            if tr.mirror_wins() { "  mirror <= zero" } else { "" }
        );
    }
    let wins = trials.iter().filter(|t| t.mirror_wins()).count();
    println!("mirror no worse in {wins} of {} seeds ({:.0}s)", trials.len(), t.elapsed().as_secs_f64());
    Ok(())
}

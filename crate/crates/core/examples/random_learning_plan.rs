//! Random learning: each epoch processes only k of the n/b shuffled batches,
//! with k uniform on 1..=max(1, n/(8b)). Compares a simulated sample fraction
//! with its expectation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srtile::tiling::{shuffled_batches, BatchPlan};

fn main() -> srtile::Result<()> {
    let (n, b): (usize, usize) = (1024, 8);
    let batches = n.div_ceil(b);
    let k_max = BatchPlan::k_max(n, b);
    let expected = (k_max as f64 + 1.0) / 2.0 * b as f64 / n as f64;
    println!("n={n} b={b}: {batches} batches, k in 1..={k_max}, expected fraction {expected:.6}");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let epochs = 10_000;
    let mut total = 0;
    for _ in 0..epochs {
        let plan = BatchPlan::draw(n, b, &mut rng)?;
        total += plan.sample_count();
    }
    println!("simulated fraction over {epochs} epochs: {:.6}", total as f64 / (epochs * n) as f64);

    let batches = shuffled_batches(144, 8, &mut rng)?;
    let plan = BatchPlan::draw(144, 8, &mut rng)?;
    println!("n=144: {} batches, this epoch uses {:?}", batches.len(), plan.selected);
    Ok(())
}

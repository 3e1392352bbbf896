//! Finite-difference check of backpropagation through the full default
//! network on a 3x9x9 input.

use srtile::gradcheck::check_model;
use srtile::model::{Model, ModelConfig, PadMode};
use srtile::synth::scene;

fn main() -> srtile::Result<()> {
    let x = scene(9, 9, 4);
    for pad in [PadMode::Mirror, PadMode::Zero] {
        let model = Model::build(ModelConfig {
            pad_mode: pad,
            ..ModelConfig::default()
        })?;
        let t = std::time::Instant::now();
        let report = check_model(&model, &x, 2, 1e-5, 7)?;
        let worst = report.worst().expect("checks ran");
        println!(
            "{pad:?}: {} checks, max relative error {:.2e} ({}), {:.1}s",
            report.checks.len(),
            report.max_rel_error(),
            worst.what,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

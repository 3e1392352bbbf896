//! Sequential vs random-learning schedules under the same step budget.
//!
//! cargo run --release --example schedule_comparison -- [steps]

use srtile::experiments::compare_schedules;
use srtile::model::ModelConfig;
use srtile::synth::scene;
use srtile::training::{TrainConfig, TrainingSet};

fn main() -> srtile::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(160);
    let images: Vec<_> = (0..16).map(|i| scene(132, 264, i)).collect();
    let set = TrainingSet::from_images(&images, 33, 3)?;
    let model = ModelConfig {
        feature_width: 8,
        expansion_width: 16,
        kernel_size: 3,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        max_epochs: None,
        max_steps: Some(steps),
        optimizer: srtile::training::OptimizerConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let report = compare_schedules(&set, &model, &cfg)?;
    println!("{} tiles, batch {}", report.tiles, report.batch_size);
    print!("{}", report.table());
    Ok(())
}

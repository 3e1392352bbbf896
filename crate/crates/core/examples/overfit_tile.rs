//! Memorise one 33x33 training pair and report PSNR as training proceeds.
//!
//! cargo run --release --example overfit_tile -- [steps] [learning_rate]

use srtile::metrics::{degrade, psnr};
use srtile::model::{Model, ModelConfig};
use srtile::synth::clean_scene;
use srtile::training::{train, OptimizerConfig, TrainConfig, TrainingSet};

fn main() -> srtile::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let hr = clean_scene(33, 33, 11);
    let lr_up = degrade(&hr, 3)?;
    let set = TrainingSet::from_pairs(vec![lr_up.clone()], vec![hr.clone()])?;
    println!("bicubic input PSNR: {:.2} dB", psnr(&hr, &lr_up, 8)?);

    let model = Model::build(ModelConfig::slim())?;
    let cfg = TrainConfig {
        optimizer: OptimizerConfig {
            learning_rate: lr,
            ..Default::default()
        },
        batch_size: 1,
        max_epochs: None,
        max_steps: Some(steps),
        eval_tiles: 1,
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let out = train(&set, model, &cfg)?;
    for r in out.records.iter().filter(|r| (r.epoch + 1) % 100 == 0) {
        println!("step {:5}  loss {:.3e}  psnr {:.2} dB", r.epoch + 1, r.loss, r.psnr.unwrap());
    }
    let fit = out.last.forward(&lr_up)?.map(|v| v.clamp(0.0, 1.0));
    println!("final PSNR {:.2} dB after {} steps in {:.1}s", psnr(&hr, &fit, 8)?, out.steps, t.elapsed().as_secs_f64());
    Ok(())
}

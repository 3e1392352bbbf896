//! Build the default network, watch every layer's output shape through the
//! inspection hook, and confirm that a zeroed residual block is the identity.

use srtile::model::{Model, ModelConfig};
use srtile::synth::scene;

fn main() -> srtile::Result<()> {
    let cfg = ModelConfig::default();
    let mut model = Model::build(cfg.clone())?;
    println!("{} conv layers, {} parameters", model.layers().len(), model.param_count());

    let x = scene(48, 48, 1);
    let y = model.forward_inspect(&x, &mut |name, t| println!("{name:<14} {:?}", t.dims()))?;
    println!("output {:?}", y.dims());

    let h = scene(20, 20, 2);
    let h = srtile::tensor::Tensor::from_fn([cfg.feature_width, 20, 20], |c, i, j| h.at(c % 3, i, j));
    model.zero_block(2);
    let out = model.residual_block_forward(2, &h)?;
    println!("zeroed block 2 is the identity: {}", out == h);
    Ok(())
}

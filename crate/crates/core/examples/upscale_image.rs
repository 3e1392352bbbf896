//! Upscale an image through the tiled pipeline. With the identity network the
//! result equals plain bicubic and the tile grid leaves no seams.
//!
//! cargo run --release --example upscale_image -- [input.png] [output.png]

use srtile::io::{load_rgb, save_png};
use srtile::metrics::seam_index;
use srtile::model::{Model, ModelConfig};
use srtile::pipeline::upscale;
use srtile::synth::scene;

fn main() -> srtile::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let img = match args.get(1) {
        Some(p) => load_rgb(p)?,
        None => scene(60, 80, 9),
    };
    let identity = Model::identity(ModelConfig::slim())?;
    let refined = upscale(Some(&identity), &img, 3, 33)?;
    let bicubic = upscale(None, &img, 3, 33)?;
    println!("output {:?}", refined.dims());
    println!("identical to bicubic: {}", refined == bicubic);
    println!(
        "seam index: tiled {:.6}, bicubic {:.6}",
        seam_index(&refined, 33)?,
        seam_index(&bicubic, 33)?
    );
    if let Some(out) = args.get(2) {
        save_png(&refined, out)?;
    }
    Ok(())
}

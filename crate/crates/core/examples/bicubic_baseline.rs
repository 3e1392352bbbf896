//! Bicubic x3 baseline: degrade, upscale, score on BT.601 luma with a 3 pixel
//! border removed.
//!
//! cargo run --release --example bicubic_baseline -- [dataset dir]
//! Without a directory a synthetic set is scored.

use srtile::io::{image_files, save_png};
use srtile::pipeline::{evaluate_files, EvalOptions};
use srtile::synth::scene;

fn main() -> srtile::Result<()> {
    let tmp;
    let dir = match std::env::args().nth(1) {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            tmp = std::env::temp_dir().join("srtile-bicubic-demo");
            std::fs::create_dir_all(&tmp).map_err(|e| srtile::Error::Config(e.to_string()))?;
            for i in 0..5 {
                save_png(&scene(120, 160, i), tmp.join(format!("scene{i}.png")))?;
            }
            tmp
        }
    };
    let report = evaluate_files(None, &image_files(&dir)?, &EvalOptions::default());
    for r in &report.rows {
        println!("{:<20} {:>8.3} dB  ssim {:.4}", r.image, r.psnr_db, r.ssim);
    }
    println!("mean {:.3} dB, ssim {:.4}", report.mean_psnr_db, report.mean_ssim);
    Ok(())
}

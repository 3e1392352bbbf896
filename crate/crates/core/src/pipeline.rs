//! End-to-end image paths: tiled refinement, upscaling and dataset scoring.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::load_rgb;
use crate::metrics::{
    bicubic_resize, degrade, modcrop, psnr, quantize_8bit, shave, ssim, to_luma, Failure, ImageScore, QualityReport,
    Scale,
};
use crate::model::{Model, PadMode};
use crate::tensor::Tensor;
use crate::tiling::{merge_tiles, split_tiles};

/// Runs `model` on every `tile x tile` tile of `image` and merges the results.
/// The tile is shrunk to the image when the image is smaller.
pub fn refine_tiled(model: &Model, image: &Tensor, tile: usize) -> Result<Tensor> {
    if model.config().pad_mode == PadMode::Valid {
        return Err(Error::Config(
            "valid padding shrinks every tile; tiled inference needs mirror or zero padding".into(),
        ));
    }
    let (_, h, w) = image.chw()?;
    let t = tile.min(h).min(w);
    if t < tile {
        log::warn!("{h}x{w} image is smaller than the {tile}px tile; using {t}px tiles");
    }
    let (tiles, grid) = split_tiles(image, t)?;
    let out = tiles
        .par_iter()
        .map(|x| model.forward(x))
        .collect::<Result<Vec<_>>>()?;
    merge_tiles(&out, &grid)
}

/// Bicubic upscaling by `scale`, then tiled refinement when a model is given.
pub fn upscale(model: Option<&Model>, image: &Tensor, scale: usize, tile: usize) -> Result<Tensor> {
    let up = bicubic_resize(image, Scale::up(scale)?)?;
    match model {
        Some(m) => refine_tiled(m, &up, tile),
        None => Ok(up),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    /// BT.601 luma only.
    Y,
    Rgb,
}

impl ColorSpace {
    pub fn label(self) -> &'static str {
        match self {
            ColorSpace::Y => "Y-BT601",
            ColorSpace::Rgb => "RGB",
        }
    }
}

impl std::str::FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "y" => Ok(ColorSpace::Y),
            "rgb" => Ok(ColorSpace::Rgb),
            other => Err(Error::Config(format!("unknown color space `{other}` (expected y or rgb)"))),
        }
    }
}

/// `(PSNR dB, SSIM)` of `sr` against `hr` after removing `border` pixels.
pub fn score(hr: &Tensor, sr: &Tensor, border: usize, color: ColorSpace) -> Result<(f64, f64)> {
    let (hr, sr) = if border > 0 {
        (shave(hr, border)?, shave(sr, border)?)
    } else {
        (hr.clone(), sr.clone())
    };
    match color {
        ColorSpace::Y => {
            let (a, b) = (to_luma(&hr)?, to_luma(&sr)?);
            let p = psnr(&a.scale(1.0 / 255.0), &b.scale(1.0 / 255.0), 8)?;
            Ok((p, ssim(&a, &b)?))
        }
        ColorSpace::Rgb => {
            let p = psnr(&hr, &sr, 8)?;
            let (c, h, w) = hr.chw()?;
            let mut s = 0.0;
            let n = h * w;
            for ci in 0..c {
                let plane = |t: &Tensor| {
                    Tensor::from_vec(&[1, h, w], t.data()[ci * n..(ci + 1) * n].iter().map(|v| v * 255.0).collect())
                };
                s += ssim(&plane(&hr)?, &plane(&sr)?)?;
            }
            Ok((p, s / c as f64))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub scale: usize,
    pub tile: usize,
    /// Border removed before scoring; defaults to the scale factor.
    pub shave: Option<usize>,
    pub color: ColorSpace,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            scale: 3,
            tile: 33,
            shave: None,
            color: ColorSpace::Y,
        }
    }
}

/// Scores one high-resolution image: crop to a multiple of the scale,
/// degrade, refine (if a model is given), quantize to 8 bits, compare.
pub fn evaluate_image(model: Option<&Model>, hr: &Tensor, opts: &EvalOptions) -> Result<(f64, f64)> {
    let hr = modcrop(hr, opts.scale)?;
    let lr_up = degrade(&hr, opts.scale)?;
    let sr = match model {
        Some(m) => quantize_8bit(&refine_tiled(m, &lr_up, opts.tile)?),
        None => lr_up,
    };
    score(&hr, &sr, opts.shave.unwrap_or(opts.scale), opts.color)
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Scores every file; a file that fails is recorded in `failures` and the
/// run continues. Means are taken over the successful rows.
pub fn evaluate_files(model: Option<&Model>, files: &[PathBuf], opts: &EvalOptions) -> QualityReport {
    let results: Vec<_> = files
        .par_iter()
        .map(|p| load_rgb(p).and_then(|hr| evaluate_image(model, &hr, opts)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in files.iter().zip(results) {
        match r {
            Ok((psnr_db, ssim)) => rows.push(ImageScore {
                image: display_name(p),
                psnr_db,
                ssim,
            }),
            Err(e) => {
                log::warn!("{}: {e}", p.display());
                failures.push(Failure {
                    image: display_name(p),
                    error: e.to_string(),
                });
            }
        }
    }
    let mut report = QualityReport::new(rows, opts.color.label(), opts.shave.unwrap_or(opts.scale));
    report.failures = failures;
    report
}

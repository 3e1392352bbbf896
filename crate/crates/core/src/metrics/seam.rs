//! Seam index: how much stronger the pixel steps across tile boundaries are
//! than the steps everywhere else.
//!
//! For tile size `t`, boundary pairs are the horizontally adjacent pixels
//! `(c-1, c)` with `c % t == 0` and the vertically adjacent pixels
//! `(r-1, r)` with `r % t == 0`. The index is
//! `mean |boundary step| / (mean |interior step| + 1e-6)`, averaged over all
//! channels. Around 1 the boundaries are indistinguishable from the interior;
//! far above 1 they are visible seams.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const EPS: f64 = 1e-6;

fn check(image: &Tensor, t: usize) -> Result<(usize, usize, usize)> {
    let (c, h, w) = image.chw()?;
    if t == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    if t >= h.min(w) {
        return Err(Error::Config(format!(
            "tile size {t} must be smaller than the image extent {}",
            h.min(w)
        )));
    }
    Ok((c, h, w))
}

pub fn seam_index(image: &Tensor, t: usize) -> Result<f64> {
    let (c, h, w) = check(image, t)?;
    let (mut bsum, mut bn, mut isum, mut inn) = (0.0, 0usize, 0.0, 0usize);
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                let v = image.at(ci, i, j);
                if j + 1 < w {
                    let d = (image.at(ci, i, j + 1) - v).abs();
                    if (j + 1) % t == 0 {
                        bsum += d;
                        bn += 1;
                    } else {
                        isum += d;
                        inn += 1;
                    }
                }
                if i + 1 < h {
                    let d = (image.at(ci, i + 1, j) - v).abs();
                    if (i + 1) % t == 0 {
                        bsum += d;
                        bn += 1;
                    } else {
                        isum += d;
                        inn += 1;
                    }
                }
            }
        }
    }
    let b = bsum / bn as f64;
    let a = isum / inn as f64;
    Ok(b / (a + EPS))
}

/// One-channel map of boundary step magnitudes (channel mean), zero away from
/// the boundaries. Each step is written to the pixel after the boundary.
pub fn boundary_heatmap(image: &Tensor, t: usize) -> Result<Tensor> {
    let (c, h, w) = check(image, t)?;
    let mut out = Tensor::zeros(&[1, h, w]);
    for i in 0..h {
        for j in 0..w {
            let mut m = 0.0;
            for ci in 0..c {
                let v = image.at(ci, i, j);
                if j % t == 0 && j > 0 {
                    m += (v - image.at(ci, i, j - 1)).abs();
                }
                if i % t == 0 && i > 0 {
                    m += (v - image.at(ci, i - 1, j)).abs();
                }
            }
            out.set(0, i, j, m / c as f64);
        }
    }
    Ok(out)
}

//! Image quality measures, the bicubic baseline and the seam index.
//!
//! Pixel tensors are `(C, H, W)` with values in `[0, 1]`. Luma planes produced
//! by [`to_luma`] are on the 8-bit scale `[0, 255]`, which is what [`ssim`]
//! expects.

mod bicubic;
mod report;
mod seam;
mod ssim;

pub use bicubic::{bicubic_resize, cubic_weight, degrade, modcrop, quantize_8bit, resize_to, Scale};
pub use report::{Failure, ImageScore, QualityReport};
pub use seam::{boundary_heatmap, seam_index};
pub use ssim::{ssim, SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB for `bits`-bit images.
///
/// Inputs are on the unit scale; the squared error is evaluated after scaling
/// both images by `2^bits - 1`. Identical images give `f64::INFINITY`.
pub fn psnr(y: &Tensor, y_hat: &Tensor, bits: u32) -> Result<f64> {
    if bits == 0 || bits > 32 {
        return Err(Error::Config(format!("bit depth must be in 1..=32, got {bits}")));
    }
    if y.dims() != y_hat.dims() {
        let (a, b) = (y.dims(), y_hat.dims());
        let k = a.iter().zip(b).position(|(p, q)| p != q).unwrap_or(0);
        return Err(Error::Shape {
            op: "psnr",
            axis: "extent",
            expected: a.get(k).copied().unwrap_or(a.len()),
            found: b.get(k).copied().unwrap_or(b.len()),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("psnr of empty images"));
    }
    let peak = ((1u64 << bits) - 1) as f64;
    let sse: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(a, b)| {
            let d = a * peak - b * peak;
            d * d
        })
        .sum();
    let mse = sse / y.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// BT.601 full-range luma `0.299 R + 0.587 G + 0.114 B`, returned as a
/// one-channel plane on the 8-bit scale.
pub fn to_luma(rgb: &Tensor) -> Result<Tensor> {
    let (c, h, w) = rgb.chw()?;
    if c != 3 {
        return Err(Error::Shape {
            op: "to_luma",
            axis: "channels",
            expected: 3,
            found: c,
        });
    }
    let d = rgb.data();
    let n = h * w;
    let y = (0..n)
        .map(|p| 255.0 * (0.299 * d[p] + 0.587 * d[n + p] + 0.114 * d[2 * n + p]))
        .collect();
    Tensor::from_vec(&[1, h, w], y)
}

/// Removes `border` pixels from every side.
pub fn shave(t: &Tensor, border: usize) -> Result<Tensor> {
    let (_, h, w) = t.chw()?;
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::Config(format!(
            "cannot shave {border} pixels from a {h}x{w} image"
        )));
    }
    t.crop(border, border, h - 2 * border, w - 2 * border)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn levels(v: &[u8]) -> Tensor {
        Tensor::from_vec(&[1, 1, v.len()], v.iter().map(|&x| x as f64 / 255.0).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = levels(&[10, 20, 30, 40]);
        assert_eq!(psnr(&a, &a, 8).unwrap(), f64::INFINITY);
        let b = levels(&[11, 19, 31, 39]);
        let p = psnr(&a, &b, 8).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-9, "{p}");
        assert!((p - 48.1308).abs() < 1e-4);
        let zero = levels(&[0; 4]);
        let full = levels(&[255; 4]);
        assert!(psnr(&zero, &full, 8).unwrap().abs() < 1e-9);
        assert!(psnr(&a, &levels(&[1, 2, 3]), 8).is_err());
    }

    #[test]
    fn psnr_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bits in [8u32, 10, 16] {
            let peak = ((1u64 << bits) - 1) as f64;
            let a = Tensor::from_fn([3, 7, 5], |_, _, _| rng.random_range(0.0..1.0));
            let b = Tensor::from_fn([3, 7, 5], |_, _, _| rng.random_range(0.0..1.0));
            let mut acc = 0.0;
            for k in 0..a.len() {
                let d = (a.data()[k] - b.data()[k]) * peak;
                acc += d * d;
            }
            let want = 10.0 * (peak * peak / (acc / a.len() as f64)).log10();
            assert!((psnr(&a, &b, bits).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_falls_as_error_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::from_fn([1, 8, 8], |_, _, _| rng.random_range(0.0..1.0));
        let noise = Tensor::from_fn([1, 8, 8], |_, _, _| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for step in 1..20 {
            let b = crate::tensor::add(&a, &noise.scale(step as f64 * 0.01)).unwrap();
            let p = psnr(&a, &b, 8).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn luma_examples() {
        let white = Tensor::full(&[3, 2, 2], 1.0);
        let y = to_luma(&white).unwrap();
        assert!(y.data().iter().all(|v| (v - 255.0).abs() < 1e-9));
        let green = Tensor::from_fn([3, 1, 1], |c, _, _| if c == 1 { 1.0 } else { 0.0 });
        assert!((to_luma(&green).unwrap().data()[0] - 149.685).abs() < 1e-9);
        for v in [0.0, 0.2, 0.5, 0.9] {
            let gray = Tensor::full(&[3, 1, 1], v);
            assert!((to_luma(&gray).unwrap().data()[0] - 255.0 * v).abs() < 1e-9);
        }
        assert!(to_luma(&Tensor::zeros(&[1, 2, 2])).is_err());
    }

    #[test]
    fn shave_borders() {
        let t = Tensor::from_fn([1, 6, 8], |_, i, j| (i * 8 + j) as f64);
        let s = shave(&t, 2).unwrap();
        assert_eq!(s.dims(), &[1, 2, 4]);
        assert_eq!(s.at(0, 0, 0), 18.0);
        assert!(shave(&t, 3).is_err());
    }
}

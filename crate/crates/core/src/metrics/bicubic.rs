//! Separable cubic-convolution resampling (a = -0.5).
//!
//! Sample positions are pixel-centre aligned. When shrinking, the kernel is
//! stretched by the inverse scale so it acts as a low-pass filter. Taps that
//! fall outside the image are clamped to the nearest edge pixel and the taps
//! of every output sample are normalised to sum to one.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const A: f64 = -0.5;

/// Cubic convolution kernel.
pub fn cubic_weight(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        (A + 2.0) * ax * ax * ax - (A + 3.0) * ax * ax + 1.0
    } else if ax < 2.0 {
        A * ax * ax * ax - 5.0 * A * ax * ax + 8.0 * A * ax - 4.0 * A
    } else {
        0.0
    }
}

/// A positive rational resize factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub num: usize,
    pub den: usize,
}

impl Scale {
    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("scale {num}/{den} must be positive")));
        }
        Ok(Scale { num, den })
    }

    pub fn up(s: usize) -> Result<Self> {
        Self::new(s, 1)
    }

    pub fn down(s: usize) -> Result<Self> {
        Self::new(1, s)
    }

    pub fn factor(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(n * num / den)`.
    pub fn apply(&self, n: usize) -> usize {
        (n * self.num).div_ceil(self.den)
    }
}

/// Taps for one axis: for each output sample, `(first source index, weights)`
/// with indices already clamped.
struct AxisTaps {
    idx: Vec<Vec<usize>>,
    wgt: Vec<Vec<f64>>,
}

fn axis_taps(n_in: usize, n_out: usize, scale: f64) -> AxisTaps {
    let shrink = scale < 1.0;
    let support = if shrink { 2.0 / scale } else { 2.0 };
    let mut idx = Vec::with_capacity(n_out);
    let mut wgt = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let centre = (o as f64 + 0.5) / scale - 0.5;
        let lo = (centre - support).floor() as isize;
        let hi = (centre + support).ceil() as isize;
        let mut ii = Vec::with_capacity((hi - lo + 1) as usize);
        let mut ww = Vec::with_capacity((hi - lo + 1) as usize);
        for j in lo..=hi {
            let d = centre - j as f64;
            let w = if shrink {
                scale * cubic_weight(scale * d)
            } else {
                cubic_weight(d)
            };
            if w != 0.0 {
                ii.push(j.clamp(0, n_in as isize - 1) as usize);
                ww.push(w);
            }
        }
        let s: f64 = ww.iter().sum();
        ww.iter_mut().for_each(|w| *w /= s);
        idx.push(ii);
        wgt.push(ww);
    }
    AxisTaps { idx, wgt }
}

fn resample(image: &Tensor, out_h: usize, out_w: usize, sy: f64, sx: f64) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config(format!(
            "resize of {h}x{w} would produce an empty {out_h}x{out_w} image"
        )));
    }
    let tx = axis_taps(w, out_w, sx);
    let ty = axis_taps(h, out_h, sy);
    let src = image.data();
    let mut horiz = vec![0.0; c * h * out_w];
    for ci in 0..c {
        for i in 0..h {
            let row = &src[(ci * h + i) * w..(ci * h + i + 1) * w];
            let dst = &mut horiz[(ci * h + i) * out_w..(ci * h + i + 1) * out_w];
            for (j, d) in dst.iter_mut().enumerate() {
                *d = tx.idx[j].iter().zip(&tx.wgt[j]).map(|(&k, &wt)| wt * row[k]).sum();
            }
        }
    }
    let mut out = vec![0.0; c * out_h * out_w];
    for ci in 0..c {
        for i in 0..out_h {
            let dst = &mut out[(ci * out_h + i) * out_w..(ci * out_h + i + 1) * out_w];
            for (&k, &wt) in ty.idx[i].iter().zip(&ty.wgt[i]) {
                let row = &horiz[(ci * h + k) * out_w..(ci * h + k + 1) * out_w];
                for (d, v) in dst.iter_mut().zip(row) {
                    *d += wt * v;
                }
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Resizes by a rational factor; the output extent is `ceil(n * scale)`.
/// Results are clamped to `[0, 1]`.
pub fn bicubic_resize(image: &Tensor, scale: Scale) -> Result<Tensor> {
    let (_, h, w) = image.chw()?;
    let f = scale.factor();
    resample(image, scale.apply(h), scale.apply(w), f, f)
}

/// Resizes to an explicit extent, with independent factors per axis.
pub fn resize_to(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, h, w) = image.chw()?;
    resample(image, out_h, out_w, out_h as f64 / h as f64, out_w as f64 / w as f64)
}

/// Crops the bottom/right so both extents are multiples of `s`.
pub fn modcrop(image: &Tensor, s: usize) -> Result<Tensor> {
    let (_, h, w) = image.chw()?;
    if s == 0 || h < s || w < s {
        return Err(Error::Config(format!("cannot modcrop {h}x{w} by {s}")));
    }
    image.crop(0, 0, h - h % s, w - w % s)
}

/// Clamps to `[0, 1]` and rounds to the nearest 8-bit level, halves rounding up.
pub fn quantize_8bit(t: &Tensor) -> Tensor {
    t.map(|v| ((v.clamp(0.0, 1.0) * 255.0 + 0.5).floor()) / 255.0)
}

/// Low-resolution stand-in for `hr`: bicubic down by `s`, then back up by `s`,
/// quantizing to 8 bits after each step. Extents must be multiples of `s`.
pub fn degrade(hr: &Tensor, s: usize) -> Result<Tensor> {
    let (_, h, w) = hr.chw()?;
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::Config(format!(
            "image {h}x{w} is not a multiple of scale {s}; modcrop first"
        )));
    }
    let lr = quantize_8bit(&bicubic_resize(hr, Scale::down(s)?)?);
    Ok(quantize_8bit(&bicubic_resize(&lr, Scale::up(s)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn([3, h, w], |_, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
        assert_eq!(cubic_weight(-1.0), 0.0);
        // partition of unity for any phase
        for k in 0..10 {
            let t = k as f64 / 10.0;
            let s: f64 = (-2..=2).map(|j| cubic_weight(t - j as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let img = random(9, 13, 1);
        let out = bicubic_resize(&img, Scale::new(1, 1).unwrap()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let out = resize_to(&img, 9, 13).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_is_preserved() {
        for (num, den) in [(3, 1), (1, 3), (2, 3), (5, 2), (1, 4)] {
            let img = Tensor::full(&[3, 12, 10], 0.3);
            let out = bicubic_resize(&img, Scale::new(num, den).unwrap()).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12), "{num}/{den}");
            let q = quantize_8bit(&Tensor::full(&[3, 12, 10], 77.0 / 255.0));
            let dq = degrade(&q, 2).unwrap();
            assert_eq!(dq, q);
        }
    }

    #[test]
    fn output_extents() {
        let img = Tensor::zeros(&[3, 375, 500]);
        let up = bicubic_resize(&img, Scale::up(3).unwrap()).unwrap();
        assert_eq!(up.dims(), &[3, 1125, 1500]);
        let down = bicubic_resize(&Tensor::zeros(&[1, 10, 7]), Scale::down(3).unwrap()).unwrap();
        assert_eq!(down.dims(), &[1, 4, 3]);
        assert!(resize_to(&img, 0, 4).is_err());
        assert!(Scale::new(0, 1).is_err());
    }

    #[test]
    fn down_up_is_lossy_but_close() {
        let img = Tensor::from_fn([1, 30, 30], |_, i, j| {
            0.5 + 0.4 * ((i as f64) * 0.2).sin() * ((j as f64) * 0.15).cos()
        });
        let d = degrade(&img, 3).unwrap();
        assert_ne!(d, img);
        let mse = crate::tensor::mse(&img, &d).unwrap();
        assert!(mse < 1e-3, "{mse}");
        assert!(degrade(&Tensor::zeros(&[1, 10, 9]), 3).is_err());
    }

    #[test]
    fn upscale_reproduces_linear_ramp_in_interior() {
        // cubic convolution reproduces linear functions away from the clamped border
        let img = Tensor::from_fn([1, 12, 12], |_, i, j| 0.02 * i as f64 + 0.03 * j as f64 + 0.1);
        let up = bicubic_resize(&img, Scale::up(2).unwrap()).unwrap();
        for i in 6..18 {
            for j in 6..18 {
                let y = (i as f64 + 0.5) / 2.0 - 0.5;
                let x = (j as f64 + 0.5) / 2.0 - 0.5;
                let want = 0.02 * y + 0.03 * x + 0.1;
                assert!((up.at(0, i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantize_rounds_half_up() {
        let t = Tensor::from_vec(&[1, 1, 4], vec![0.5 / 255.0, -0.2, 1.7, 127.5 / 255.0]).unwrap();
        let q = quantize_8bit(&t);
        let lv: Vec<f64> = q.data().iter().map(|v| (v * 255.0).round()).collect();
        assert_eq!(lv, vec![1.0, 0.0, 255.0, 128.0]);
    }

    #[test]
    fn modcrop_trims_remainder() {
        let img = random(11, 14, 2);
        let m = modcrop(&img, 3).unwrap();
        assert_eq!(m.dims(), &[3, 9, 12]);
        assert_eq!(m, img.crop(0, 0, 9, 12).unwrap());
    }
}

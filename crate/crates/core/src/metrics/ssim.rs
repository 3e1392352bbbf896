use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side of the Gaussian window.
pub const SSIM_WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 255.0;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable "valid" Gaussian filtering of an `h x w` plane.
fn blur(src: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * src[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

/// Mean structural similarity of two single-channel planes on the 8-bit scale,
/// using an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (ca, h, w) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    for (axis, e, f) in [("channels", 1, ca), ("channels", 1, cb), ("height", h, hb), ("width", w, wb)] {
        if e != f {
            return Err(Error::Shape {
                op: "ssim",
                axis,
                expected: e,
                found: f,
            });
        }
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape {
            op: "ssim",
            axis: if h < SSIM_WINDOW { "height (must be >= window)" } else { "width (must be >= window)" },
            expected: SSIM_WINDOW,
            found: h.min(w),
        });
    }
    let g = gaussian_taps();
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mx, my) = (blur(x, h, w, &g), blur(y, h, w, &g));
    let (sxx, syy, sxy) = (blur(&xx, h, w, &g), blur(&yy, h, w, &g), blur(&xy, h, w, &g));
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|p| {
            let (ux, uy) = (mx[p], my[p]);
            let vx = sxx[p] - ux * ux;
            let vy = syy[p] - uy * uy;
            let cov = sxy[p] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

//! Deterministic synthetic RGB scenes for demos and tests: smooth gradients,
//! discs, stripes and a little texture, so bicubic degradation loses detail
//! the way it does on photographs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

struct Disc {
    cy: f64,
    cx: f64,
    r: f64,
    color: [f64; 3],
}

/// A `3 x h x w` scene in `[0, 1]`, fully determined by `seed`, with
/// per-pixel texture noise of amplitude 0.03.
pub fn scene(h: usize, w: usize, seed: u64) -> Tensor {
    scene_with_noise(h, w, seed, 0.03)
}

/// [`scene`] without the per-pixel noise: every detail is a smooth or edged
/// structure that a network can in principle infer from its neighbourhood.
pub fn clean_scene(h: usize, w: usize, seed: u64) -> Tensor {
    scene_with_noise(h, w, seed, 0.0)
}

fn scene_with_noise(h: usize, w: usize, seed: u64, amp: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let grad: [(f64, f64); 3] = std::array::from_fn(|_| (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
    let discs: Vec<Disc> = (0..rng.random_range(3..7))
        .map(|_| Disc {
            cy: rng.random_range(0.0..h as f64),
            cx: rng.random_range(0.0..w as f64),
            r: rng.random_range(3.0..(h.min(w) as f64 / 3.0).max(4.0)),
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        })
        .collect();
    let period = rng.random_range(3.0..9.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (sa, ca) = angle.sin_cos();
    let stripe_amp = rng.random_range(0.05..0.2);
    let noise: Vec<f64> = (0..h * w).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    let (hf, wf) = (h.max(1) as f64, w.max(1) as f64);
    Tensor::from_fn([3, h, w], |c, i, j| {
        let (y, x) = (i as f64, j as f64);
        let mut v = base[c] + grad[c].0 * (y / hf - 0.5) + grad[c].1 * (x / wf - 0.5);
        v += stripe_amp * ((x * ca + y * sa) * std::f64::consts::TAU / period).sin();
        for d in &discs {
            let dist = ((y - d.cy).powi(2) + (x - d.cx).powi(2)).sqrt();
            // one-pixel soft edge
            let inside = (d.r - dist + 0.5).clamp(0.0, 1.0);
            v = v * (1.0 - inside) + d.color[c] * inside;
        }
        (v + noise[i * w + j]).clamp(0.0, 1.0)
    })
}

//! Central-difference checks of [`Model::backward`].
//!
//! The scalar under test is `L(theta, x) = <forward(x), G>` for a fixed random
//! `G`, whose exact gradient is `backward(trace, G)`. Each check compares an
//! analytic derivative with `(L(+h) - L(-h)) / 2h` along either one
//! coordinate or a random direction spanning a whole layer, so every
//! parameter takes part.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub what: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a - n| / max(|a|, |n|, floor)`; the floor keeps exact zeros from
    /// dividing by zero.
    pub fn rel_error(&self) -> f64 {
        let d = (self.analytic - self.numeric).abs();
        d / self.analytic.abs().max(self.numeric.abs()).max(1e-8)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checks: Vec<GradCheck>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error()).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.rel_error().total_cmp(&b.rel_error()))
    }
}

fn objective(model: &Model, x: &Tensor, g: &Tensor) -> Result<f64> {
    model.forward(x)?.dot(g)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Scales `parts` jointly to unit length, so a step of `h` along the
/// direction moves the parameters by `h` no matter how many there are.
fn normalize(parts: &mut [&mut Vec<f64>]) {
    let norm = parts.iter().flat_map(|p| p.iter()).map(|v| v * v).sum::<f64>().sqrt();
    for p in parts.iter_mut() {
        p.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Checks `model` at input `x`: one random-direction derivative per layer and
/// for the input, plus `coords` randomly chosen single weights and one bias
/// per layer. `h` is the central-difference step.
pub fn check_model(model: &Model, x: &Tensor, coords: usize, h: f64, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_dims = model.forward(x)?.dims().to_vec();
    let n_out: usize = out_dims.iter().product();
    let g = Tensor::from_vec(&out_dims, gaussian(&mut rng, n_out))?;
    let trace = model.forward_trace(x, None)?;
    let (grads, gx) = model.backward(&trace, &g)?;
    let mut report = GradReport::default();

    let fd = |m: &Model, xin: &Tensor| objective(m, xin, &g);

    for (li, layer) in model.layers().iter().enumerate() {
        let nw = layer.kernel.weights.len();
        let nb = layer.kernel.bias.len();
        // direction over all weights and biases of the layer
        let mut dw = gaussian(&mut rng, nw);
        let mut db = gaussian(&mut rng, nb);
        normalize(&mut [&mut dw, &mut db]);
        let analytic: f64 = grads.layers[li].weights.data().iter().zip(&dw).map(|(a, b)| a * b).sum::<f64>()
            + grads.layers[li].bias.iter().zip(&db).map(|(a, b)| a * b).sum::<f64>();
        let shift = |sign: f64| {
            let mut m = model.clone();
            let k = &mut m.layers_mut()[li].kernel;
            for (w, d) in k.weights.data_mut().iter_mut().zip(&dw) {
                *w += sign * h * d;
            }
            for (b, d) in k.bias.iter_mut().zip(&db) {
                *b += sign * h * d;
            }
            m
        };
        let numeric = (fd(&shift(1.0), x)? - fd(&shift(-1.0), x)?) / (2.0 * h);
        report.checks.push(GradCheck {
            what: format!("{} direction", layer.name),
            analytic,
            numeric,
        });

        let mut coord = |what: String, bias: bool, i: usize| -> Result<()> {
            let bump = |sign: f64| {
                let mut m = model.clone();
                let k = &mut m.layers_mut()[li].kernel;
                if bias {
                    k.bias[i] += sign * h;
                } else {
                    k.weights.data_mut()[i] += sign * h;
                }
                m
            };
            let numeric = (fd(&bump(1.0), x)? - fd(&bump(-1.0), x)?) / (2.0 * h);
            let analytic = if bias {
                grads.layers[li].bias[i]
            } else {
                grads.layers[li].weights.data()[i]
            };
            report.checks.push(GradCheck { what, analytic, numeric });
            Ok(())
        };
        for _ in 0..coords {
            let i = rng.random_range(0..nw);
            coord(format!("{} weight[{i}]", layer.name), false, i)?;
        }
        let i = rng.random_range(0..nb);
        coord(format!("{} bias[{i}]", layer.name), true, i)?;
    }

    let mut dx = gaussian(&mut rng, x.len());
    normalize(&mut [&mut dx]);
    let analytic: f64 = gx.data().iter().zip(&dx).map(|(a, b)| a * b).sum();
    let shifted = |sign: f64| {
        let mut t = x.clone();
        for (v, d) in t.data_mut().iter_mut().zip(&dx) {
            *v += sign * h * d;
        }
        t
    };
    let numeric = (fd(model, &shifted(1.0))? - fd(model, &shifted(-1.0))?) / (2.0 * h);
    report.checks.push(GradCheck {
        what: "input direction".into(),
        analytic,
        numeric,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, PadMode};

    #[test]
    fn small_models_pass_in_every_mode() {
        for pad in [PadMode::Mirror, PadMode::Zero, PadMode::Valid] {
            let cfg = ModelConfig {
                feature_width: 3,
                expansion_width: 4,
                kernel_size: 3,
                n_residual_blocks: 2,
                pad_mode: pad,
                seed: 2,
                ..Default::default()
            };
            let m = Model::build(cfg).unwrap();
            // valid mode loses two pixels per convolution
            let n = if pad == PadMode::Valid { 23 } else { 13 };
            let x = Tensor::from_fn([3, n, n], |c, i, j| ((c * 7 + i * 5 + j * 3) % 11) as f64 / 10.0);
            let r = check_model(&m, &x, 2, 1e-6, 1).unwrap();
            assert_eq!(r.checks.len(), 9 * 4 + 1);
            assert!(r.max_rel_error() < 1e-5, "{pad:?}: {:?}", r.worst());
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let c = GradCheck {
            what: "x".into(),
            analytic: 1.0,
            numeric: 1.01,
        };
        assert!(c.rel_error() > 9e-3);
        let z = GradCheck {
            what: "z".into(),
            analytic: 0.0,
            numeric: 0.0,
        };
        assert_eq!(z.rel_error(), 0.0);
    }
}

//! Adam and plain gradient descent over flat parameter slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent, `w <- w - lr * g`.
    Gd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "gd" | "sgd" => Ok(OptimizerKind::Gd),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (expected adam or gd)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn gd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Gd,
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state. Moment buffers are created lazily on the first step and
/// keyed by slot position, so the slot layout must stay fixed between steps.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every slot. Nothing is modified if any gradient is
    /// non-finite or a slot length disagrees.
    pub fn step_slots(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                op: "optimizer step",
                axis: "slot count",
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    op: "optimizer step",
                    axis: "slot length",
                    expected: p.len(),
                    found: g.len(),
                });
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                what: "gradient",
                step: self.t as usize,
            });
        }
        if self.m.is_empty() && self.cfg.kind == OptimizerKind::Adam {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let lr = self.cfg.learning_rate;
        match self.cfg.kind {
            OptimizerKind::Gd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.iter_mut().zip(g.iter()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig { beta1: b1, beta2: b2, epsilon: eps, .. } = self.cfg;
                let c1 = 1.0 - b1.powi(self.t as i32);
                let c2 = 1.0 - b2.powi(self.t as i32);
                for (s, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[s], &mut self.v[s]);
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates every weight and bias of `model`, then rounds the parameters to
    /// storage precision so saved checkpoints reproduce the live model.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != model.layers().len() {
            return Err(Error::Shape {
                op: "optimizer step",
                axis: "layer count",
                expected: model.layers().len(),
                found: grads.layers.len(),
            });
        }
        let g: Vec<&[f64]> = grads
            .layers
            .iter()
            .flat_map(|l| [l.weights.data(), &l.bias[..]])
            .collect();
        let mut p: Vec<&mut [f64]> = model
            .layers_mut()
            .iter_mut()
            .flat_map(|l| {
                let k = &mut l.kernel;
                [k.weights.data_mut(), &mut k.bias[..]]
            })
            .collect();
        self.step_slots(&mut p, &g)?;
        model.round_to_storage();
        Ok(())
    }
}

//! Training under the batch loss `(1/2N) sum_i ||y_i - f(x_i)||^2`, with a
//! sequential schedule (every batch, every epoch) or random learning (a
//! [`BatchPlan`] subset of the shuffled batches per epoch).

mod checkpoint;
mod data;
mod optim;

pub use checkpoint::{checkpoint, resume, resume_for, sidecar_path, Resumed, Telemetry, MISSING_TELEMETRY};
pub use data::TrainingSet;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::model::{Gradients, Model};
use crate::tensor::Tensor;
use crate::tiling::{shuffled_batches, BatchPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Sequential,
    #[serde(alias = "random")]
    RandomLearning,
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Schedule::Sequential),
            "random" | "random_learning" | "random-learning" => Ok(Schedule::RandomLearning),
            other => Err(Error::Config(format!(
                "unknown schedule `{other}` (expected sequential or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: Option<usize>,
    /// Wall-clock budget, checked before each epoch starts.
    pub max_seconds: Option<f64>,
    /// Optimizer-step budget; the epoch in progress is cut short when it runs out.
    pub max_steps: Option<usize>,
    pub schedule: Schedule,
    /// Degradation factor used to build training pairs.
    pub scale: usize,
    /// Seeds batch shuffling and selection. Weight init uses the model seed.
    pub seed: u64,
    /// Write a checkpoint of the current model every this many epochs.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
    /// Number of leading tiles scored for the per-epoch PSNR; 0 disables it.
    pub eval_tiles: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            max_epochs: Some(100),
            max_seconds: None,
            max_steps: None,
            schedule: Schedule::Sequential,
            scale: 3,
            seed: 0,
            checkpoint_every: None,
            checkpoint_path: None,
            eval_tiles: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(2..=4).contains(&self.scale) {
            return Err(Error::Config(format!("scale must be 2, 3 or 4, got {}", self.scale)));
        }
        if self.max_epochs.is_none() && self.max_seconds.is_none() && self.max_steps.is_none() {
            return Err(Error::Config(
                "set at least one of max_epochs, max_seconds or max_steps".into(),
            ));
        }
        if let Some(s) = self.max_seconds {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::Config(format!("max_seconds must be positive, got {s}")));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        if self.checkpoint_every.is_some() && self.checkpoint_path.is_none() {
            return Err(Error::Config("checkpoint_every needs checkpoint_path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub samples: usize,
    pub seconds: f64,
    /// Mean batch loss over the batches processed in the epoch.
    pub loss: f64,
    #[serde(with = "crate::serde_inf::option")]
    pub psnr: Option<f64>,
}

/// The target region matched by the model output: all of it with same-size
/// padding, the centre crop in valid mode.
fn aligned_target(target: &Tensor, out: &Tensor) -> Result<Tensor> {
    if target.dims() == out.dims() {
        return Ok(target.clone());
    }
    let (c, h, w) = out.chw()?;
    let (tc, th, tw) = target.chw()?;
    if c != tc || h > th || w > tw {
        return Err(Error::Shape {
            op: "batch_loss",
            axis: if c != tc { "channels" } else { "extent" },
            expected: if c != tc { tc } else { th.min(tw) },
            found: if c != tc { c } else { h.max(w) },
        });
    }
    target.center_crop(h, w)
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.dims() != y.dims() {
        let k = x.dims().iter().zip(y.dims()).position(|(a, b)| a != b).unwrap_or(0);
        return Err(Error::Shape {
            op: "batch_loss",
            axis: "pair extent",
            expected: x.dims().get(k).copied().unwrap_or(0),
            found: y.dims().get(k).copied().unwrap_or(0),
        });
    }
    Ok(())
}

/// `(1/2N) sum_i ||y_i - f(x_i)||^2` over `N` pairs `(x_i, y_i)`.
pub fn batch_loss(model: &Model, pairs: &[(&Tensor, &Tensor)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("batch_loss needs at least one pair"));
    }
    let n = pairs.len() as f64;
    let sse = pairs
        .par_iter()
        .map(|&(x, y)| {
            check_pair(x, y)?;
            let out = model.forward(x)?;
            let y = aligned_target(y, &out)?;
            Ok(out.sub(&y)?.sum_squares())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sse.iter().sum::<f64>() / (2.0 * n))
}

/// Batch loss and its gradient with respect to every parameter. Pairs are
/// processed in parallel; per-pair gradients are summed in pair order, so the
/// result does not depend on the thread count.
pub fn batch_gradients(model: &Model, pairs: &[(&Tensor, &Tensor)]) -> Result<(f64, Gradients)> {
    if pairs.is_empty() {
        return Err(Error::Empty("batch_gradients needs at least one pair"));
    }
    let n = pairs.len() as f64;
    let parts = pairs
        .par_iter()
        .map(|&(x, y)| {
            check_pair(x, y)?;
            let trace = model.forward_trace(x, None)?;
            let y = aligned_target(y, trace.output())?;
            let diff = trace.output().sub(&y)?;
            let (g, _) = model.backward(&trace, &diff.scale(1.0 / n))?;
            Ok((diff.sum_squares(), g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros_like(model);
    let mut sse = 0.0;
    for (s, g) in &parts {
        sse += s;
        total.accumulate(g)?;
    }
    Ok((sse / (2.0 * n), total))
}

/// Mean PSNR (8-bit peak) of the clamped model output over the first `count`
/// pairs of `set`.
pub fn evaluate_psnr(model: &Model, set: &TrainingSet, count: usize) -> Result<f64> {
    let count = count.min(set.len());
    if count == 0 {
        return Err(Error::Empty("no tiles to evaluate"));
    }
    let scores = (0..count)
        .into_par_iter()
        .map(|i| {
            let (x, y) = set.pair(i);
            let out = model.forward(x)?.map(|v| v.clamp(0.0, 1.0));
            psnr(&aligned_target(y, &out)?, &out, 8)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / count as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model at the end of the epoch with the lowest mean loss.
    pub best: Model,
    pub best_epoch: usize,
    /// Model after the final step.
    pub last: Model,
    pub records: Vec<EpochRecord>,
    pub steps: usize,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

/// Trains `model` on `set`.
///
/// Each epoch shuffles the tile indices into batches of `batch_size`
/// (the last may be short), picks the batches to process from the schedule,
/// and takes one optimizer step per batch. A non-finite loss or gradient
/// aborts the epoch in progress without touching the weights; training then
/// continues with the next epoch.
pub fn train(set: &TrainingSet, model: Model, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(set, model, cfg, &mut |_| {})
}

/// [`train`], calling `on_epoch` with each record as soon as it is complete.
pub fn train_with(
    set: &TrainingSet,
    mut model: Model,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("training set has no tiles"));
    }
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = set.len();
    let b = cfg.batch_size;
    let start = Instant::now();
    let mut records = Vec::new();
    let mut step_losses = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut steps = 0usize;
    let mut epoch = 0usize;
    loop {
        if cfg.max_epochs.is_some_and(|m| epoch >= m)
            || cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s)
            || cfg.max_steps.is_some_and(|s| steps >= s)
        {
            break;
        }
        let t0 = Instant::now();
        let batches = shuffled_batches(n, b, &mut rng)?;
        let plan = match cfg.schedule {
            Schedule::Sequential => BatchPlan::all(n, b)?,
            Schedule::RandomLearning => BatchPlan::draw(n, b, &mut rng)?,
        };
        let (mut done, mut samples, mut loss_sum) = (0usize, 0usize, 0.0);
        for &bi in &plan.selected {
            if cfg.max_steps.is_some_and(|s| steps >= s) {
                break;
            }
            let pairs: Vec<_> = batches[bi].iter().map(|&i| set.pair(i)).collect();
            let (loss, grads) = batch_gradients(&model, &pairs)?;
            if !loss.is_finite() || !grads.is_finite() {
                log::error!(
                    "epoch {epoch}: non-finite {} at step {steps}; epoch aborted",
                    if loss.is_finite() { "gradient" } else { "loss" }
                );
                break;
            }
            opt.step(&mut model, &grads)?;
            steps += 1;
            done += 1;
            samples += pairs.len();
            loss_sum += loss;
            step_losses.push(loss);
        }
        if done > 0 {
            let psnr = if cfg.eval_tiles > 0 {
                Some(evaluate_psnr(&model, set, cfg.eval_tiles)?)
            } else {
                None
            };
            let rec = EpochRecord {
                epoch,
                batches: done,
                samples,
                seconds: t0.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
                loss: loss_sum / done as f64,
                psnr,
            };
            log::info!(
                "epoch {} batches {} samples {} seconds {:.3} loss {:.6e}",
                rec.epoch,
                rec.batches,
                rec.samples,
                rec.seconds,
                rec.loss
            );
            if best.as_ref().is_none_or(|(l, _, _)| rec.loss < *l) {
                best = Some((rec.loss, epoch, model.clone()));
            }
            on_epoch(&rec);
            records.push(rec);
            if let (Some(every), Some(path)) = (cfg.checkpoint_every, &cfg.checkpoint_path) {
                if records.len() % every == 0 {
                    checkpoint(&model, &records, path)?;
                }
            }
        }
        epoch += 1;
    }
    let (_, best_epoch, best) = best.ok_or(Error::NonFinite {
        what: "loss (no epoch completed)",
        step: steps,
    })?;
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        records,
        steps,
        step_losses,
    })
}

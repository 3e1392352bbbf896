//! The two comparative experiments: tile seams under zero vs mirror padding,
//! and random learning vs the sequential schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{degrade, seam_index};
use crate::model::{Model, ModelConfig, PadMode};
use crate::pipeline::refine_tiled;
use crate::synth::scene;
use crate::training::{train, EpochRecord, Schedule, TrainConfig, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeamExperiment {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Number of synthetic training scenes.
    pub corpus_size: usize,
    /// Side of each training scene.
    pub corpus_extent: usize,
    /// Side of the test scene; a multiple of the tile so every boundary
    /// falls on the grid the seam index measures.
    pub test_extent: usize,
    pub seeds: Vec<u64>,
}

impl Default for SeamExperiment {
    fn default() -> Self {
        SeamExperiment {
            model: ModelConfig {
                feature_width: 8,
                expansion_width: 16,
                kernel_size: 3,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                max_epochs: None,
                max_steps: Some(1000),
                eval_tiles: 0,
                ..TrainConfig::default()
            },
            corpus_size: 10,
            corpus_extent: 66,
            test_extent: 99,
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamTrial {
    pub seed: u64,
    pub zero: f64,
    pub mirror: f64,
    /// Seam index of the unrefined bicubic test input, for reference.
    pub input: f64,
}

impl SeamTrial {
    pub fn mirror_wins(&self) -> bool {
        self.mirror <= self.zero
    }
}

/// Trains a zero-padding and a mirror-padding model from identical
/// initial weights, data and batch order for every seed, then measures the
/// seam index of each model's tiled output on a held-out scene.
pub fn seam_experiment(exp: &SeamExperiment) -> Result<Vec<SeamTrial>> {
    let t = exp.model.tile_size;
    if !exp.test_extent.is_multiple_of(t) || exp.test_extent <= t {
        return Err(Error::Config(format!(
            "test_extent {} must be a multiple of the tile size {t} and span more than one tile",
            exp.test_extent
        )));
    }
    let s = exp.train.scale;
    let mut trials = Vec::with_capacity(exp.seeds.len());
    for &seed in &exp.seeds {
        let corpus: Vec<_> = (0..exp.corpus_size as u64)
            .map(|i| scene(exp.corpus_extent, exp.corpus_extent, seed * 1000 + i))
            .collect();
        let set = TrainingSet::from_images(&corpus, t, s)?;
        let test = degrade(&scene(exp.test_extent, exp.test_extent, seed * 1000 + 999), s)?;
        let tc = TrainConfig {
            seed,
            ..exp.train.clone()
        };
        let run = |pad: PadMode| -> Result<f64> {
            let mc = ModelConfig {
                pad_mode: pad,
                seed,
                ..exp.model.clone()
            };
            let out = train(&set, Model::build(mc)?, &tc)?;
            seam_index(&refine_tiled(&out.last, &test, t)?, t)
        };
        let zero = run(PadMode::Zero)?;
        let mirror = run(PadMode::Mirror)?;
        let trial = SeamTrial {
            seed,
            zero,
            mirror,
            input: seam_index(&test, t)?,
        };
        log::info!("seed {seed}: seam index zero {zero:.4} mirror {mirror:.4}");
        trials.push(trial);
    }
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub epochs: usize,
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    #[serde(with = "crate::serde_inf::option")]
    pub final_psnr: Option<f64>,
    pub mean_epoch_seconds: f64,
    pub mean_samples_per_epoch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRun {
    pub schedule: Schedule,
    pub summary: ScheduleSummary,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    pub tiles: usize,
    pub batch_size: usize,
    pub sequential: ScheduleRun,
    pub random: ScheduleRun,
}

impl ScheduleComparison {
    /// Plain-text table of both summaries, one metric per row.
    pub fn table(&self) -> String {
        let (a, b) = (&self.sequential.summary, &self.random.summary);
        let psnr = |p: Option<f64>| p.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut s = format!("{:<24}{:>14}{:>14}\n", "", "sequential", "random");
        s += &format!("{:<24}{:>14}{:>14}\n", "epochs", a.epochs, b.epochs);
        s += &format!("{:<24}{:>14}{:>14}\n", "steps", a.steps, b.steps);
        s += &format!("{:<24}{:>14.6}{:>14.6}\n", "final loss", a.final_loss, b.final_loss);
        s += &format!("{:<24}{:>14}{:>14}\n", "final psnr (dB)", psnr(a.final_psnr), psnr(b.final_psnr));
        s += &format!(
            "{:<24}{:>14.4}{:>14.4}\n",
            "mean epoch seconds", a.mean_epoch_seconds, b.mean_epoch_seconds
        );
        s += &format!(
            "{:<24}{:>14.1}{:>14.1}\n",
            "mean samples / epoch", a.mean_samples_per_epoch, b.mean_samples_per_epoch
        );
        s
    }
}

fn summarize(records: &[EpochRecord], steps: usize) -> Result<ScheduleSummary> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Empty("no epoch completed within the budget")),
    };
    let n = records.len() as f64;
    Ok(ScheduleSummary {
        epochs: records.len(),
        steps,
        first_loss: first.loss,
        final_loss: last.loss,
        final_psnr: last.psnr,
        mean_epoch_seconds: records.iter().map(|r| r.seconds).sum::<f64>() / n,
        mean_samples_per_epoch: records.iter().map(|r| r.samples as f64).sum::<f64>() / n,
    })
}

/// Trains the same initial model on `set` under each schedule with the same
/// budget and seed.
pub fn compare_schedules(set: &TrainingSet, model: &ModelConfig, cfg: &TrainConfig) -> Result<ScheduleComparison> {
    if cfg.max_steps.is_none() && cfg.max_seconds.is_none() {
        return Err(Error::Config(
            "the schedule comparison needs a step or wall-clock budget".into(),
        ));
    }
    let init = Model::build(model.clone())?;
    let run = |schedule: Schedule| -> Result<ScheduleRun> {
        let c = TrainConfig {
            schedule,
            ..cfg.clone()
        };
        let out = train(set, init.clone(), &c)?;
        Ok(ScheduleRun {
            schedule,
            summary: summarize(&out.records, out.steps)?,
            epochs: out.records,
        })
    };
    Ok(ScheduleComparison {
        tiles: set.len(),
        batch_size: cfg.batch_size,
        sequential: run(Schedule::Sequential)?,
        random: run(Schedule::RandomLearning)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seam_experiment_runs_and_is_deterministic() {
        let exp = SeamExperiment {
            model: ModelConfig {
                tile_size: 11,
                feature_width: 3,
                expansion_width: 3,
                kernel_size: 3,
                n_residual_blocks: 1,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                max_epochs: None,
                max_steps: Some(3),
                eval_tiles: 0,
                ..TrainConfig::default()
            },
            corpus_size: 2,
            corpus_extent: 24,
            test_extent: 33,
            seeds: vec![4],
        };
        let a = seam_experiment(&exp).unwrap();
        assert_eq!(a, seam_experiment(&exp).unwrap());
        assert!(a[0].zero.is_finite() && a[0].mirror.is_finite());
        let bad = SeamExperiment { test_extent: 30, ..exp };
        assert!(seam_experiment(&bad).is_err());
    }

    #[test]
    fn schedule_comparison_budgets() {
        let imgs: Vec<_> = (0..2).map(|i| scene(40, 40, i)).collect();
        let set = TrainingSet::from_images(&imgs, 9, 2).unwrap();
        assert_eq!(set.len(), 2 * 25);
        let mc = ModelConfig {
            tile_size: 9,
            feature_width: 3,
            expansion_width: 3,
            kernel_size: 3,
            n_residual_blocks: 1,
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            batch_size: 2,
            max_epochs: None,
            max_steps: Some(30),
            scale: 2,
            eval_tiles: 2,
            ..TrainConfig::default()
        };
        let r = compare_schedules(&set, &mc, &tc).unwrap();
        assert_eq!(r.sequential.summary.steps, 30);
        assert_eq!(r.random.summary.steps, 30);
        assert_eq!(r.sequential.summary.epochs, 2);
        assert!(r.random.summary.epochs > r.sequential.summary.epochs);
        assert!(r.table().contains("mean samples / epoch"));
        let unbounded = TrainConfig { max_steps: None, max_epochs: Some(1), ..tc };
        assert!(compare_schedules(&set, &mc, &unbounded).is_err());
    }
}

//! The `srtool` command line: `train`, `upscale`, `evaluate`, `seam`,
//! `experiment-random` and `baseline`.
//!
//! Settings come from built-in defaults, then an optional JSON config file
//! (`--config`), then flags; later sources win. Failures print a single line
//! `error: <kind>: <message>` to stderr and exit with status 1 (2 for usage
//! errors).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::compare_schedules;
use crate::io::{image_files, load_rgb, save_png};
use crate::metrics::{boundary_heatmap, seam_index};
use crate::model::{load_weights, load_weights_for, Model, ModelConfig, PadMode};
use crate::pipeline::{evaluate_files, upscale, ColorSpace, EvalOptions};
use crate::training::{checkpoint, train_with, OptimizerKind, Schedule, TrainConfig, TrainingSet};

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data_dir: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "srtool", version, about = "Tiled single-image super-resolution")]
pub struct Cli {
    /// Worker threads for tile inference, batch gradients and evaluation.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory of images.
    Train(TrainArgs),
    /// Upscale one image: bicubic, then tiled refinement.
    Upscale(UpscaleArgs),
    /// Score a model (or plain bicubic) on a directory of images.
    Evaluate(EvaluateArgs),
    /// Measure tile-boundary seams in an image.
    Seam(SeamArgs),
    /// Compare the sequential and random-learning schedules.
    ExperimentRandom(ExperimentArgs),
    /// Bicubic baseline on one or more dataset directories.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds weight initialisation and batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// mirror, zero or valid.
    #[arg(long)]
    pub padding: Option<PadMode>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub tile: Option<u32>,
    /// Layer widths preset: default (64/256, 7x7) or slim (16/32, 3x3).
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub feature_width: Option<usize>,
    #[arg(long)]
    pub expansion_width: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Default,
    Slim,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// sequential or random.
    #[arg(long)]
    pub schedule: Option<Schedule>,
    /// adam or gd.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Degradation factor (2, 3 or 4).
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Tiles scored for the per-epoch PSNR (0 disables it).
    #[arg(long)]
    pub eval_tiles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Directory of PNG/BMP training images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weight file to write; telemetry goes to `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UpscaleArgs {
    #[command(flatten)]
    pub model_flags: ModelFlags,
    /// Weight file, or `identity` for the pass-through network.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub scale: u32,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model_flags: ModelFlags,
    /// Weight file, or `none` for plain bicubic.
    #[arg(long)]
    pub model: Option<String>,
    /// Directory of high-resolution PNG/BMP images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub scale: u32,
    /// Border pixels ignored when scoring; defaults to the scale.
    #[arg(long)]
    pub shave: Option<usize>,
    /// y (BT.601 luma) or rgb.
    #[arg(long, default_value = "y")]
    pub color: ColorSpace,
    /// Report file; `.csv` writes per-image rows, anything else JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeamArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 33, value_parser = clap::value_parser!(u32).range(1..))]
    pub tile: u32,
    /// Write a greyscale map of boundary step magnitudes.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON report with both telemetry series.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Dataset directories, each scored separately.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub scale: u32,
    #[arg(long)]
    pub shave: Option<usize>,
    #[arg(long, default_value = "y")]
    pub color: ColorSpace,
}

impl ModelFlags {
    fn load(&self) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let m = &mut rc.model;
        if let Some(p) = self.preset {
            let base = match p {
                Preset::Default => ModelConfig::default(),
                Preset::Slim => ModelConfig::slim(),
            };
            m.feature_width = base.feature_width;
            m.expansion_width = base.expansion_width;
            m.kernel_size = base.kernel_size;
        }
        if let Some(s) = self.seed {
            m.seed = s;
            rc.train.seed = s;
        }
        if let Some(p) = self.padding {
            m.pad_mode = p;
        }
        if let Some(t) = self.tile {
            m.tile_size = t as usize;
        }
        if let Some(v) = self.feature_width {
            m.feature_width = v;
        }
        if let Some(v) = self.expansion_width {
            m.expansion_width = v;
        }
        if let Some(v) = self.kernel_size {
            m.kernel_size = v;
        }
        if let Some(v) = self.blocks {
            m.n_residual_blocks = v;
        }
        m.validate()?;
        Ok(rc)
    }

    /// True when the model shape comes from a config file or explicit flags
    /// rather than from the weight file.
    fn shapes_given(&self) -> bool {
        self.config.is_some()
            || self.preset.is_some()
            || self.feature_width.is_some()
            || self.expansion_width.is_some()
            || self.kernel_size.is_some()
            || self.blocks.is_some()
    }
}

impl TrainFlags {
    fn apply(&self, t: &mut TrainConfig) {
        if let Some(v) = self.schedule {
            t.schedule = v;
        }
        if let Some(v) = self.optimizer {
            t.optimizer.kind = v;
        }
        if let Some(v) = self.lr {
            t.optimizer.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            t.max_epochs = Some(v);
        }
        if let Some(v) = self.max_seconds {
            t.max_seconds = Some(v);
        }
        if let Some(v) = self.max_steps {
            t.max_steps = Some(v);
        }
        if let Some(v) = self.scale {
            t.scale = v;
        }
        if let Some(v) = self.checkpoint_every {
            t.checkpoint_every = Some(v);
        }
        if let Some(v) = self.eval_tiles {
            t.eval_tiles = v;
        }
    }
}

fn required<'a>(flag: Option<&'a PathBuf>, file: Option<&'a PathBuf>, name: &str) -> Result<&'a PathBuf> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("missing --{name} (or its key in the config file)")))
}

/// Loads every readable image in `dir`; unreadable files are skipped with a
/// warning, and an empty result is an error.
pub fn load_dataset(dir: &Path) -> Result<Vec<crate::tensor::Tensor>> {
    let mut images = Vec::new();
    for p in image_files(dir)? {
        match load_rgb(&p) {
            Ok(t) => images.push(t),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if images.is_empty() {
        return Err(Error::Empty("no readable PNG/BMP images in the data directory"));
    }
    Ok(images)
}

fn load_model(spec: &str, flags: &ModelFlags) -> Result<Model> {
    let rc = flags.load()?;
    if spec == "identity" {
        return Model::identity(rc.model);
    }
    let mut m = if flags.shapes_given() {
        load_weights_for(spec, &rc.model)?
    } else {
        load_weights(spec)?
    };
    m.set_pad_mode(rc.model.pad_mode);
    Ok(m)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut rc = a.model.load()?;
    a.train.apply(&mut rc.train);
    let data = required(a.data.as_ref(), rc.data_dir.as_ref(), "data")?.clone();
    let dest = match (a.out.clone(), rc.model_path.clone()) {
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => rc.out_dir.clone().unwrap_or_default().join("model.srw"),
    };
    if rc.train.checkpoint_every.is_some() && rc.train.checkpoint_path.is_none() {
        rc.train.checkpoint_path = Some(dest.clone());
    }
    rc.train.validate()?;
    let images = load_dataset(&data)?;
    let set = TrainingSet::from_images(&images, rc.model.tile_size, rc.train.scale)?;
    writeln!(out, "{} tiles from {} images", set.len(), images.len()).map_err(|e| Error::io("<stdout>", e))?;
    let model = Model::build(rc.model.clone())?;
    let mut werr = None;
    let result = train_with(&set, model, &rc.train, &mut |r| {
        if let Err(e) = serde_json::to_string(r)
            .map_err(Error::from)
            .and_then(|line| writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e)))
        {
            werr.get_or_insert(e);
        }
    })?;
    if let Some(e) = werr {
        return Err(e);
    }
    checkpoint(&result.best, &result.records, &dest)?;
    writeln!(
        out,
        "wrote {} (best epoch {}, {} steps)",
        dest.display(),
        result.best_epoch,
        result.steps
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_upscale(a: &UpscaleArgs, out: &mut dyn Write) -> Result<()> {
    let img = load_rgb(&a.input)?;
    let rc = a.model_flags.load()?;
    let model = match a.model.as_deref() {
        None | Some("none") => None,
        Some(spec) => Some(load_model(spec, &a.model_flags)?),
    };
    let up = upscale(model.as_ref(), &img, a.scale as usize, rc.model.tile_size)?;
    save_png(&up, &a.output)?;
    let (_, h, w) = up.chw()?;
    writeln!(out, "wrote {} ({w}x{h})", a.output.display()).map_err(|e| Error::io("<stdout>", e))
}

fn write_report(report: &crate::metrics::QualityReport, path: &Path) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        report.write_csv(f)
    } else {
        std::fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let rc = a.model_flags.load()?;
    let data = required(a.data.as_ref(), rc.data_dir.as_ref(), "data")?;
    let model = match a.model.as_deref() {
        None | Some("none") => None,
        Some(spec) => Some(load_model(spec, &a.model_flags)?),
    };
    let opts = EvalOptions {
        scale: a.scale as usize,
        tile: rc.model.tile_size,
        shave: a.shave,
        color: a.color,
    };
    let files = image_files(data)?;
    if files.is_empty() {
        return Err(Error::Empty("no PNG/BMP images in the data directory"));
    }
    let report = evaluate_files(model.as_ref(), &files, &opts);
    let io = |e| Error::io("<stdout>", e);
    for r in &report.rows {
        writeln!(out, "{}\t{:.4}\t{:.4}", r.image, r.psnr_db, r.ssim).map_err(io)?;
    }
    for f in &report.failures {
        writeln!(out, "{}\tfailed\t{}", f.image, f.error).map_err(io)?;
    }
    writeln!(
        out,
        "mean\t{:.4}\t{:.4}\t({} images, {}, shave {})",
        report.mean_psnr_db,
        report.mean_ssim,
        report.rows.len(),
        report.color_space,
        report.shave
    )
    .map_err(io)?;
    if let Some(p) = &a.out {
        write_report(&report, p)?;
    }
    Ok(())
}

fn cmd_seam(a: &SeamArgs, out: &mut dyn Write) -> Result<()> {
    let img = load_rgb(&a.image)?;
    let t = a.tile as usize;
    let s = seam_index(&img, t)?;
    writeln!(out, "seam_index {s}").map_err(|e| Error::io("<stdout>", e))?;
    if let Some(p) = &a.heatmap {
        let hm = boundary_heatmap(&img, t)?;
        let peak = hm.data().iter().cloned().fold(0.0, f64::max);
        let norm = if peak > 0.0 { hm.scale(1.0 / peak) } else { hm };
        save_png(&norm, p)?;
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let mut rc = a.model.load()?;
    // budgets come from steps or seconds; an epoch cap would hide the
    // difference in epoch counts unless asked for explicitly
    if a.train.max_epochs.is_none() {
        rc.train.max_epochs = None;
    }
    a.train.apply(&mut rc.train);
    let data = required(a.data.as_ref(), rc.data_dir.as_ref(), "data")?;
    let images = load_dataset(data)?;
    let set = TrainingSet::from_images(&images, rc.model.tile_size, rc.train.scale)?;
    let report = compare_schedules(&set, &rc.model, &rc.train)?;
    let io = |e| Error::io("<stdout>", e);
    for run in [&report.sequential, &report.random] {
        for r in &run.epochs {
            writeln!(out, "{:?}\t{}", run.schedule, serde_json::to_string(r)?).map_err(io)?;
        }
    }
    write!(out, "{}", report.table()).map_err(io)?;
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let opts = EvalOptions {
        scale: a.scale as usize,
        shave: a.shave,
        color: a.color,
        ..EvalOptions::default()
    };
    let io = |e| Error::io("<stdout>", e);
    for dir in &a.data {
        let files = image_files(dir)?;
        if files.is_empty() {
            return Err(Error::Empty("no PNG/BMP images in a baseline directory"));
        }
        let r = evaluate_files(None, &files, &opts);
        writeln!(
            out,
            "{}\tx{}\tpsnr {:.4}\tssim {:.4}\t({} images, {} failed)",
            dir.display(),
            a.scale,
            r.mean_psnr_db,
            r.mean_ssim,
            r.rows.len(),
            r.failures.len()
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Upscale(a) => cmd_upscale(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Seam(a) => cmd_seam(a, out),
        Command::ExperimentRandom(a) => cmd_experiment(a, out),
        Command::Baseline(a) => cmd_baseline(a, out),
    }
}

/// Process entry point used by the `srtool` binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

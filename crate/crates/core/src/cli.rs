//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or file
//! format error, 3 training failure. Progress lines start with
//! [`PROGRESS_PREFIX`] and go to standard error; summaries go to standard
//! output. Values resolve as flag, then `--config` file, then default.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augmentation::AugmentConfig;
use crate::datagen::{load_dataset, load_model, save_dataset, save_model, Dataset, ModelMeta, RunConfig, SyntheticSceneConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    ablate, export_report, fps_benchmark, import_report, AblationEvent, AblationPreset, EvalReport, ReportFormat,
    FPS_RUNS,
};
use crate::geometry::{Point3, Pose3D};
use crate::localization::LocalizationMode;
use crate::nn::{ArchPreset, EpochStats, NetKind, NetScale, Network};
use crate::pipeline::{fit_prior, localize_dataset, perturb_centers, predict_poses, train_posenet, train_refiner};
use crate::prior::PcaPrior;

/// Marks machine-parseable progress lines.
pub const PROGRESS_PREFIX: &str = "deepprior:progress";
pub const THREADS_ENV: &str = "DEEPPRIOR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "deepprior", version, about = "Depth-image 3D hand pose estimation with a PCA pose prior")]
pub struct Cli {
    /// Run configuration JSON; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for data generation, augmentation, initialization and ordering.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Main output artifact of the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Suppress progress lines (the final summary is still printed).
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Worker thread cap (also read from DEEPPRIOR_THREADS). All stages currently run on one thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset (optionally splitting off held-out subjects).
    GenerateData(GenerateArgs),
    /// Fit the PCA pose prior and write it as JSON.
    FitPrior(FitPriorArgs),
    /// Train the pose network.
    Train(TrainArgs),
    /// Train the localization refiner.
    TrainRefiner(TrainRefinerArgs),
    /// Compute crop centres for every frame and write them as CSV.
    Localize(LocalizeArgs),
    /// Predict 3D poses and write them as JSON.
    Predict(PredictArgs),
    /// Evaluate a pose model against annotated data.
    Evaluate(EvaluateArgs),
    /// Run an ablation table.
    Ablate(AblateArgs),
    /// Measure throughput of the track-then-predict loop.
    Benchmark(BenchmarkArgs),
    /// Convert a report to curve files (CSV or JSON).
    ExportCurves(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long, default_value_t = 10)]
    pub subjects: u32,
    /// Comma-separated subject ids written to --test-out instead of --out.
    #[arg(long, value_delimiter = ',')]
    pub held_out: Vec<u32>,
    #[arg(long, value_name = "FILE")]
    pub test_out: Option<PathBuf>,
    /// Scene settings JSON (camera, placement, joint limits, noise).
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub missing_probability: Option<f64>,
    #[arg(long)]
    pub depth_jitter: Option<f64>,
}

/// Training settings shared by `train`, `train-refiner` and `ablate`.
#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub scale: Option<NetScale>,
    /// Augmentation subset such as `R+T+S`, `T` or `none`.
    #[arg(long)]
    pub augment: Option<String>,
    #[arg(long)]
    pub cube_size: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct PriorOverrides {
    #[arg(long)]
    pub prior_dim: Option<usize>,
    /// Fit the prior on the unaugmented poses.
    #[arg(long)]
    pub no_prior_augmentation: bool,
    #[arg(long)]
    pub prior_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitPriorArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    pub prior: PriorOverrides,
    #[arg(long)]
    pub augment: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub architecture: Option<ArchPreset>,
    #[arg(long)]
    pub freeze_prior: bool,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[command(flatten)]
    pub prior: PriorOverrides,
}

#[derive(Debug, Args)]
pub struct TrainRefinerArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct LocalizeSource {
    #[arg(long, value_enum, default_value_t = LocalizationMode::CenterOfMass)]
    pub mode: LocalizationMode,
    /// Refiner model, required for `--mode refined`.
    #[arg(long, value_name = "FILE")]
    pub refiner: Option<PathBuf>,
    /// Gaussian noise added to each centre, mm per axis.
    #[arg(long, default_value_t = 0.0)]
    pub center_noise: f64,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    pub source: LocalizeSource,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    pub source: LocalizeSource,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    pub source: LocalizeSource,
    /// Report format; defaults to the --out extension (JSON for `.json`, CSV otherwise).
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub preset: AblationPreset,
    /// Training data; without it a synthetic dataset is generated from the seed.
    #[arg(long, value_name = "FILE", requires = "test")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "data")]
    pub test: Option<PathBuf>,
    /// Frames of the generated dataset (two of ten subjects held out).
    #[arg(long, default_value_t = 1250)]
    pub frames: usize,
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, value_enum)]
    pub architecture: Option<ArchPreset>,
    /// Override the preset's test-time centre noise, mm.
    #[arg(long)]
    pub center_noise: Option<f64>,
    /// Also measure fps per row (wall clock, not reproducible).
    #[arg(long)]
    pub fps: bool,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub refiner: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = FPS_RUNS)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Report in CSV or JSON (by extension).
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

/// Parses `argv` (including the program name), runs it and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Training(_) => 3,
        _ => 2,
    }
}

fn out_path(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(_) | Error::Json(_) => Error::Config(format!("config {}: {e}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn check_threads(cli: &Cli) -> Result<usize> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a count")))?),
        Err(_) => None,
    };
    let n = cli.threads.or(from_env).unwrap_or(1);
    if n == 0 {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(n)
}

fn apply_train(cfg: &mut RunConfig, o: &TrainOverrides) -> Result<()> {
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.lr {
        cfg.optimizer.lr = v;
    }
    if let Some(v) = o.scale {
        cfg.scale = v;
    }
    if let Some(v) = &o.augment {
        apply_augment(cfg, v)?;
    }
    if let Some(v) = o.cube_size {
        cfg.cube_size = v;
    }
    Ok(())
}

fn apply_augment(cfg: &mut RunConfig, flags: &str) -> Result<()> {
    let subset = AugmentConfig::from_flags(flags)?;
    cfg.augmentation.enable_rotation = subset.enable_rotation;
    cfg.augmentation.enable_translation = subset.enable_translation;
    cfg.augmentation.enable_scale = subset.enable_scale;
    Ok(())
}

fn apply_prior(cfg: &mut RunConfig, o: &PriorOverrides) {
    if let Some(v) = o.prior_dim {
        cfg.prior_dim = v;
    }
    if o.no_prior_augmentation {
        cfg.prior_augmentation = false;
    }
    if let Some(v) = o.prior_samples {
        cfg.prior_samples = v;
    }
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn line(&self, msg: &str) {
        if !self.quiet {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "{PROGRESS_PREFIX} {msg}");
            let _ = err.flush();
        }
    }

    fn epoch(&self, model: &str, s: &EpochStats) {
        self.line(&format!(
            "model={model} epoch={}/{} loss={:.6} seconds={:.3}",
            s.epoch + 1,
            s.epochs,
            s.loss,
            s.seconds
        ));
    }
}

fn execute(cli: &Cli) -> Result<String> {
    check_threads(cli)?;
    let progress = Progress { quiet: cli.quiet };
    match &cli.command {
        Command::GenerateData(a) => generate(cli, a),
        Command::FitPrior(a) => fit_prior_cmd(cli, a),
        Command::Train(a) => train_cmd(cli, a, &progress),
        Command::TrainRefiner(a) => train_refiner_cmd(cli, a, &progress),
        Command::Localize(a) => localize_cmd(cli, a),
        Command::Predict(a) => predict_cmd(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Ablate(a) => ablate_cmd(cli, a, &progress),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::ExportCurves(a) => export_cmd(cli, a),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<String> {
    let out = out_path(cli)?;
    let mut scene = match &a.scene {
        Some(p) => serde_json::from_slice::<SyntheticSceneConfig>(&fs::read(p)?)
            .map_err(|e| Error::Config(format!("scene {}: {e}", p.display())))?,
        None => SyntheticSceneConfig::default(),
    };
    scene.seed = cli.seed.unwrap_or(scene.seed);
    if let Some(v) = a.missing_probability {
        scene.missing_probability = v;
    }
    if let Some(v) = a.depth_jitter {
        scene.depth_jitter = v;
    }
    if a.frames == 0 || a.subjects == 0 {
        return Err(Error::Config("--frames and --subjects must be positive".into()));
    }
    if !a.held_out.is_empty() && a.test_out.is_none() {
        return Err(Error::Config("--held-out needs --test-out".into()));
    }
    let data = generate_scene(a.frames, a.subjects, &scene)?;
    let mut s = String::new();
    if let Some(test_out) = &a.test_out {
        let (train, test) = data.split_subjects(&a.held_out);
        save_dataset(&train, out)?;
        save_dataset(&test, test_out)?;
        let _ = writeln!(s, "wrote {} frames to {} and {} frames to {}", train.len(), out.display(), test.len(), test_out.display());
    } else {
        save_dataset(&data, out)?;
        let _ = writeln!(s, "wrote {} frames to {}", data.len(), out.display());
    }
    Ok(s)
}

fn generate_scene(frames: usize, subjects: u32, scene: &SyntheticSceneConfig) -> Result<Dataset> {
    scene.validate().map_err(|e| Error::Config(e.to_string()))?;
    crate::datagen::generate_dataset(frames, subjects, scene)
}

fn fit_prior_cmd(cli: &Cli, a: &FitPriorArgs) -> Result<String> {
    let out = out_path(cli)?;
    let mut cfg = base_config(cli)?;
    apply_prior(&mut cfg, &a.prior);
    if let Some(f) = &a.augment {
        apply_augment(&mut cfg, f)?;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    let prior = fit_prior(&data, &cfg)?;
    fs::write(out, serde_json::to_vec_pretty(&prior)?)?;
    let total: f64 = prior.eigenvalues.iter().sum();
    Ok(format!("prior k={} dim={} retained variance {:.6} written to {}\n", prior.k(), prior.dim(), total, out.display()))
}

fn train_cmd(cli: &Cli, a: &TrainArgs, progress: &Progress) -> Result<String> {
    let out = out_path(cli)?;
    let mut cfg = base_config(cli)?;
    apply_train(&mut cfg, &a.train)?;
    apply_prior(&mut cfg, &a.prior);
    if let Some(v) = a.architecture {
        cfg.architecture = v;
    }
    if a.freeze_prior {
        cfg.freeze_prior = true;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    let trained = train_posenet(&data, &cfg, &mut |s| progress.epoch("posenet", s))?;
    let meta = ModelMeta { fingerprint: cfg.fingerprint(), cube_size: cfg.cube_size };
    save_model(out, &trained.net, Some(&trained.prior), &meta)?;
    let last = trained.history.losses.last().map_or_else(|| "n/a".into(), |l| format!("{l:.6}"));
    Ok(format!(
        "trained {} ({} parameters) for {} epochs, final loss {last}, config {}; model written to {}\n",
        cfg.architecture.label(),
        trained.net.param_count(),
        cfg.epochs,
        meta.fingerprint,
        out.display()
    ))
}

fn train_refiner_cmd(cli: &Cli, a: &TrainRefinerArgs, progress: &Progress) -> Result<String> {
    let out = out_path(cli)?;
    let mut cfg = base_config(cli)?;
    apply_train(&mut cfg, &a.train)?;
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    let (net, history) = train_refiner(&data, &cfg, &mut |s| progress.epoch("refinenet", s))?;
    let meta = ModelMeta { fingerprint: cfg.fingerprint(), cube_size: cfg.cube_size };
    save_model(out, &net, None, &meta)?;
    let last = history.losses.last().map_or_else(|| "n/a".into(), |l| format!("{l:.6}"));
    Ok(format!("trained refiner for {} epochs, final loss {last}; model written to {}\n", cfg.epochs, out.display()))
}

fn load_refiner(path: Option<&Path>) -> Result<Option<Network<f32>>> {
    path.map(|p| load_model::<f32>(p, Some(NetKind::RefineNet)).map(|m| m.net)).transpose()
}

fn centers_for(cli: &Cli, data: &Dataset, src: &LocalizeSource, cube_size: f64) -> Result<Vec<Point3>> {
    let cfg = base_config(cli)?;
    let refiner = load_refiner(src.refiner.as_deref())?;
    if src.mode == LocalizationMode::Refined && refiner.is_none() {
        return Err(Error::Config("--mode refined needs --refiner".into()));
    }
    if !(src.center_noise >= 0.0) {
        return Err(Error::Config("--center-noise must be non-negative".into()));
    }
    let centers = localize_dataset(data, src.mode, refiner.as_ref(), cube_size, cfg.segment_extent)?;
    perturb_centers(&centers, src.center_noise, cfg.seed)
}

fn localization_error(centers: &[Point3], data: &Dataset) -> f64 {
    centers.iter().zip(&data.annotations).map(|(c, p)| c.distance(p.reference())).sum::<f64>() / centers.len().max(1) as f64
}

fn localize_cmd(cli: &Cli, a: &LocalizeArgs) -> Result<String> {
    let out = out_path(cli)?;
    let cfg = base_config(cli)?;
    let data = load_dataset(&a.data)?;
    let centers = centers_for(cli, &data, &a.source, cfg.cube_size)?;
    let mut csv = String::from("frame,x_mm,y_mm,z_mm\n");
    for (i, c) in centers.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{},{}", c.x, c.y, c.z);
    }
    fs::write(out, csv)?;
    Ok(format!(
        "{} localization of {} frames, mean distance to the reference joint {:.3} mm; centres written to {}\n",
        a.source.mode.label(),
        centers.len(),
        localization_error(&centers, &data),
        out.display()
    ))
}

fn predictions(cli: &Cli, model: &Path, data: &Dataset, src: &LocalizeSource) -> Result<(Vec<Pose3D>, ModelMeta, Vec<Point3>)> {
    let m = load_model::<f32>(model, Some(NetKind::PoseNet))?;
    let centers = centers_for(cli, data, src, m.meta.cube_size)?;
    let preds = predict_poses(&m.net, &data.frames, &centers, &data.intrinsics, m.meta.cube_size)?;
    Ok((preds, m.meta, centers))
}

fn predict_cmd(cli: &Cli, a: &PredictArgs) -> Result<String> {
    let out = out_path(cli)?;
    let data = load_dataset(&a.data)?;
    let (preds, _, _) = predictions(cli, &a.model, &data, &a.source)?;
    fs::write(out, serde_json::to_vec(&preds)?)?;
    Ok(format!("predicted {} poses; written to {}\n", preds.len(), out.display()))
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs) -> Result<String> {
    let out = out_path(cli)?;
    let cfg = base_config(cli)?;
    let data = load_dataset(&a.data)?;
    let (preds, meta, centers) = predictions(cli, &a.model, &data, &a.source)?;
    let report = EvalReport::compute(&preds, &data.annotations, &cfg.evaluation.thresholds()?, &meta.fingerprint)?;
    let format = a.format.unwrap_or_else(|| ReportFormat::for_path(out));
    export_report(&report, out, format)?;
    Ok(summarize_report(&report, Some(localization_error(&centers, &data)), out))
}

fn fraction_at(curve: &crate::evaluation::MetricCurve, t: f64) -> Option<f64> {
    curve.thresholds.iter().position(|&x| x >= t).map(|i| curve.fractions[i])
}

fn summarize_report(r: &EvalReport, loc: Option<f64>, out: &Path) -> String {
    let mut s = format!("frames {}  average 3D error {:.3} mm", r.frames, r.average_error_mm);
    if let Some(l) = loc {
        let _ = write!(s, "  localization error {l:.3} mm");
    }
    s.push('\n');
    for c in r.curves() {
        let _ = write!(s, "{:<18}", c.variant.name());
        for t in [10.0, 20.0, 40.0, 80.0] {
            if let Some(f) = fraction_at(c, t) {
                let _ = write!(s, "  <= {t} mm: {:.3}", f);
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "report written to {}", out.display());
    s
}

fn ablate_cmd(cli: &Cli, a: &AblateArgs, progress: &Progress) -> Result<String> {
    let mut base = base_config(cli)?;
    apply_train(&mut base, &a.train)?;
    if let Some(v) = a.architecture {
        base.architecture = v;
    }
    base.validate()?;
    let (train, test) = match (&a.data, &a.test) {
        (Some(d), Some(t)) => (load_dataset(d)?, load_dataset(t)?),
        _ => {
            let scene = SyntheticSceneConfig { seed: base.seed, ..SyntheticSceneConfig::default() };
            generate_scene(a.frames, 10, &scene)?.split_subjects(&[8, 9])
        }
    };
    let mut plan = a.preset.plan(&base, a.seeds);
    if let Some(n) = a.center_noise {
        plan.center_noise = n;
    }
    plan.measure_fps = a.fps;
    let table = ablate(&plan, &train, &test, &mut |e| match e {
        AblationEvent::Training { row, seed, model } => progress.line(&format!("row={row:?} seed={seed} training={model}")),
        AblationEvent::Epoch { row, seed, model, stats } => {
            progress.line(&format!(
                "row={row:?} seed={seed} model={model} epoch={}/{} loss={:.6} seconds={:.3}",
                stats.epoch + 1,
                stats.epochs,
                stats.loss,
                stats.seconds
            ))
        }
        AblationEvent::Cell { row, seed, outcome } => progress.line(&format!(
            "row={row:?} seed={seed} error_mm={}",
            outcome.report.as_ref().map_or_else(|| "failed".into(), |r| format!("{:.4}", r.average_error_mm))
        )),
    })?;
    let mut s = table.render();
    if let Some(out) = &cli.out {
        let bytes = match ReportFormat::for_path(out) {
            ReportFormat::Json => {
                let mut v = serde_json::to_vec_pretty(&table)?;
                v.push(b'\n');
                v
            }
            ReportFormat::Csv => table.to_csv().into_bytes(),
        };
        fs::write(out, bytes)?;
        let _ = writeln!(s, "table written to {}", out.display());
    }
    Ok(s)
}

fn benchmark_cmd(a: &BenchmarkArgs) -> Result<String> {
    let posenet = load_model::<f32>(&a.model, Some(NetKind::PoseNet))?;
    let refiner = load_model::<f32>(&a.refiner, Some(NetKind::RefineNet))?;
    let data = load_dataset(&a.data)?;
    let cfg = RunConfig::default();
    let r = fps_benchmark(
        &posenet.net,
        &refiner.net,
        &data.frames,
        &data.intrinsics,
        posenet.meta.cube_size,
        cfg.segment_extent,
        a.warmup,
        a.runs,
    )?;
    Ok(format!(
        "{:.1} fps (std {:.2}, {:.1}% of mean) over {} runs of {} frames\n",
        r.mean,
        r.std,
        100.0 * r.relative_spread(),
        r.runs.len(),
        r.frames
    ))
}

fn export_cmd(cli: &Cli, a: &ExportArgs) -> Result<String> {
    let out = out_path(cli)?;
    let report = import_report(&a.report, ReportFormat::for_path(&a.report))?;
    let format = a.format.unwrap_or_else(|| ReportFormat::for_path(out));
    export_report(&report, out, format)?;
    Ok(format!("{} curves of {} thresholds written to {}\n", report.curves().len(), report.all_joints.thresholds.len(), out.display()))
}

/// Loads a prior written by `fit-prior`.
pub fn load_prior(path: &Path) -> Result<PcaPrior> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}


//! The `massdet` command line.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 input validation failure,
//! 3 runtime failure. Failures print one `massdet: error[<kind>]: ...` line
//! to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use massdet_core::checkpoint::ModelParams;
use massdet_core::dataio::{
    generate_synthetic_dataset, split_dataset, Annotation, SynthConfig, DEFAULT_RATIOS,
};
use massdet_core::detector::{detect, BBox, Class, Detection};
use massdet_core::evaluation::{
    evaluate, iou_table_csv, metrics_csv, roc_points_csv, roc_svg, ImageResult, MetricsReport, REFERENCE_METRICS,
    REFERENCE_RATES,
};
use massdet_core::imgproc::{CropBox, Preprocessor};
use massdet_core::model::Model;
use massdet_core::training::{prepare_sample, train_with, EpochLog, TrainSample};
use massdet_core::{rng, Error};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::{self, Dataset};
use crate::error::{failed, invalid, CliError, CliResult};
use crate::io;
use crate::overlay;

pub const CONFIG_ECHO: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "model.mdck";
pub const BEST_CHECKPOINT: &str = "best.mdck";
pub const LOSS_CSV: &str = "loss.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "massdet", version, about = "Breast mass detection and classification pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration JSON; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise, enhance and crop images to the breast region.
    Preprocess(PreprocessArgs),
    /// Write a seeded train/val/test manifest for a dataset.
    Split(SplitArgs),
    /// Generate a synthetic annotated dataset.
    Synth(SynthArgs),
    /// Train a detector and write checkpoints plus a loss log.
    Train(TrainArgs),
    /// Run a trained detector on images.
    Detect(DetectArgs),
    /// Score detection JSON files against ground truth annotations.
    Eval(EvalArgs),
    /// Render report files from a saved evaluation.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// An image file, a directory of images, or a dataset root.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset root containing images/.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for manifest.json; defaults to the dataset root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Square canvas side in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root containing images/ and annotations/.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, loss log and config echo.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides train.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitPart {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Checkpoint file; its directory's config.json is used unless
    /// --config is given.
    #[arg(long)]
    pub model: PathBuf,
    /// An image file, a directory of images, or a dataset root.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Which manifest split to run on when --input is a dataset root.
    #[arg(long, value_enum, default_value_t = SplitPart::All)]
    pub split: SplitPart,
    /// Skip the PNG overlays.
    #[arg(long)]
    pub no_overlay: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of detection JSON files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Annotation directory, or a dataset root containing annotations/.
    #[arg(long)]
    pub gt: PathBuf,
    /// Overrides eval.iou_threshold.
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `eval`, or the directory containing it.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

fn init_logging() {
    let filter = std::env::var("MDETECT_LOG").unwrap_or_else(|_| "info".to_string());
    let _ = env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = PipelineConfig::load(cli.global.config.as_deref())?;
    if let Some(s) = cli.global.seed {
        cfg.train.seed = s;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a, &cfg, g),
        Command::Split(a) => cmd_split(a, &cfg, g),
        Command::Synth(a) => cmd_synth(a, &cfg, g),
        Command::Train(a) => cmd_train(a, cfg, g),
        Command::Detect(a) => cmd_detect(a, g),
        Command::Eval(a) => cmd_eval(a, cfg, g),
        Command::Report(a) => cmd_report(a, g),
    }
}

fn echo_config(dir: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    io::write_file(&dir.join(CONFIG_ECHO), cfg.to_json())
}

/// Image files named by `input`: a single file, the images/ directory of
/// a dataset root, or a plain directory of images.
fn input_images(input: &Path) -> CliResult<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(CliError::validation(format!("{} does not exist", input.display())));
    }
    let sub = input.join(dataset::IMAGES_DIR);
    let files = io::list_images(if sub.is_dir() { &sub } else { input })?;
    if files.is_empty() {
        return Err(CliError::validation(format!("no images found in {}", input.display())));
    }
    Ok(files)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessSidecar {
    pub image: String,
    pub otsu_threshold: Option<u8>,
    pub mask_area: usize,
    pub crop_box: CropBox,
    pub filter_used: String,
    pub output_size: (usize, usize),
}

fn cmd_preprocess(a: &PreprocessArgs, cfg: &PipelineConfig, g: &GlobalArgs) -> CliResult<()> {
    let files = input_images(&a.input)?;
    io::prepare_out_dir(&a.out, g.overwrite)?;
    echo_config(&a.out, cfg)?;
    let pre = Preprocessor::new(cfg.preprocess.clone());
    let mut skipped = 0;
    for f in &files {
        let img = io::read_gray(f)?;
        let id = io::stem(f);
        let p = match pre.run(&img) {
            Ok(p) => p,
            Err(Error::NoForeground) => {
                warn!("{}: no foreground, skipped", f.display());
                skipped += 1;
                continue;
            }
            Err(e) => return Err(CliError::runtime(format!("{}: {e}", f.display()))),
        };
        io::write_gray(&a.out.join(format!("{id}.png")), &p.image)?;
        let side = PreprocessSidecar {
            image: file_name(f),
            otsu_threshold: p.otsu.map(|o| o.threshold),
            mask_area: p.mask_area,
            crop_box: p.crop,
            filter_used: p.filter_used.label(),
            output_size: (p.image.width(), p.image.height()),
        };
        io::write_file(&a.out.join(format!("{id}.json")), io::to_json_pretty(&side))?;
    }
    info!("preprocessed {} images ({skipped} skipped)", files.len() - skipped);
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_split(a: &SplitArgs, cfg: &PipelineConfig, g: &GlobalArgs) -> CliResult<()> {
    let ds = Dataset::open(&a.data)?;
    let seed = g.seed.unwrap_or(cfg.train.seed);
    let m = split_dataset(&ds.ids(), DEFAULT_RATIOS, seed).map_err(invalid)?;
    let out = a.out.clone().unwrap_or_else(|| a.data.clone());
    let target = out.join(dataset::MANIFEST);
    if target.exists() && !g.overwrite {
        return Err(CliError::validation(format!("{} exists (pass --overwrite)", target.display())));
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    io::write_file(&target, io::to_json_pretty(&m))?;
    info!("split {} ids into {}/{}/{}", ds.ids().len(), m.train.len(), m.val.len(), m.test.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SynthEcho<'a> {
    n: usize,
    seed: u64,
    synth: &'a SynthConfig,
}

fn cmd_synth(a: &SynthArgs, cfg: &PipelineConfig, g: &GlobalArgs) -> CliResult<()> {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let scfg = SynthConfig {
        canvas: (a.size, a.size),
        ..SynthConfig::default()
    };
    scfg.validate().map_err(invalid)?;
    io::prepare_out_dir(&a.out, g.overwrite)?;
    let seed = g.seed.unwrap_or(cfg.train.seed);
    let samples = generate_synthetic_dataset(a.n, &scfg, seed).map_err(failed)?;
    let (img_dir, ann_dir) = (a.out.join(dataset::IMAGES_DIR), a.out.join(dataset::ANNOTATIONS_DIR));
    for d in [&img_dir, &ann_dir] {
        std::fs::create_dir_all(d).map_err(|e| CliError::runtime(format!("{}: {e}", d.display())))?;
    }
    for s in &samples {
        io::write_gray(&img_dir.join(format!("{}.png", s.id)), &s.image)?;
        dataset::write_annotation_file(
            &ann_dir.join(format!("{}.json", s.id)),
            &format!("../{}/{}.png", dataset::IMAGES_DIR, s.id),
            &s.annotations,
            (s.image.width(), s.image.height()),
        )?;
    }
    echo_config(&a.out, cfg)?;
    io::write_file(&a.out.join("synth.json"), io::to_json_pretty(&SynthEcho { n: a.n, seed, synth: &scfg }))?;
    info!("wrote {} synthetic images to {}", a.n, a.out.display());
    Ok(())
}

/// Loads and preprocesses the samples named by `ids`. Images whose boxes
/// vanish after preprocessing are skipped with a warning.
fn load_samples(ds: &Dataset, ids: &[String], pre: &Preprocessor) -> CliResult<Vec<TrainSample>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let img = ds.load_image(id)?;
        let anns = ds.load_annotations(id)?;
        let (s, _) = prepare_sample(&img, &anns, pre).map_err(|e| CliError::validation(format!("{id}: {e}")))?;
        if s.annotations.is_empty() {
            warn!("{id}: no annotation survives preprocessing, skipped");
            continue;
        }
        out.push(s);
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs, mut cfg: PipelineConfig, g: &GlobalArgs) -> CliResult<()> {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let ds = Dataset::open(&a.data)?;
    let seed = cfg.train.seed;
    let manifest = match ds.manifest()? {
        Some(m) => m,
        None => split_dataset(&ds.ids(), DEFAULT_RATIOS, seed).map_err(invalid)?,
    };
    if manifest.train.is_empty() {
        return Err(CliError::validation("training split is empty"));
    }
    let pre = Preprocessor::new(cfg.model_preprocess());
    let train_set = load_samples(&ds, &manifest.train, &pre)?;
    let val_set = load_samples(&ds, &manifest.val, &pre)?;
    if train_set.is_empty() {
        return Err(CliError::validation("no usable training samples"));
    }
    io::prepare_out_dir(&a.out, g.overwrite)?;
    echo_config(&a.out, &cfg)?;
    io::write_file(&a.out.join(dataset::MANIFEST), io::to_json_pretty(&manifest))?;
    let ckpt_dir = a.out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::runtime(e.to_string()))?;

    let model = Model::new(cfg.model(), &mut rng::stream(seed, "init")).map_err(invalid)?;
    info!(
        "training on {} images ({} val) for {} epochs",
        train_set.len(),
        val_set.len(),
        cfg.train.epochs
    );
    let mut best: Option<f64> = None;
    let mut io_err: Option<CliError> = None;
    let every = cfg.train.checkpoint_every;
    let out = a.out.clone();
    let outcome = train_with(model, &train_set, &val_set, &cfg.train, &mut |e: &EpochLog, m: &Model| {
        info!(
            "epoch {} {:?}: total {:.5} val {}",
            e.epoch,
            e.phase,
            e.total,
            e.val_total.map_or("n/a".into(), |v| format!("{v:.5}"))
        );
        let mut save = |p: PathBuf| {
            if let Err(err) = io::write_file(&p, m.to_params().to_bytes()) {
                io_err.get_or_insert(err);
            }
        };
        if every > 0 && e.epoch.is_multiple_of(every) {
            save(ckpt_dir.join(format!("epoch_{:04}.mdck", e.epoch)));
        }
        if let Some(v) = e.val_total {
            if best.is_none_or(|b| v < b) {
                best = Some(v);
                save(out.join(BEST_CHECKPOINT));
            }
        }
        Ok(())
    })
    .map_err(failed)?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let final_bytes = outcome.model.to_params().to_bytes();
    io::write_file(&a.out.join(FINAL_CHECKPOINT), &final_bytes)?;
    if best.is_none() {
        io::write_file(&a.out.join(BEST_CHECKPOINT), &final_bytes)?;
    }
    let mut csv = String::from(EpochLog::CSV_HEADER);
    csv.push('\n');
    for e in &outcome.log {
        csv.push_str(&e.csv_row());
        csv.push('\n');
    }
    io::write_file(&a.out.join(LOSS_CSV), csv)?;
    info!("wrote {}", a.out.join(FINAL_CHECKPOINT).display());
    Ok(())
}

/// Loads a checkpoint with the configuration stored next to it, or with
/// `--config` when given.
pub fn load_model(path: &Path, config: Option<&Path>) -> CliResult<(Model, PipelineConfig)> {
    let cfg = match config {
        Some(p) => PipelineConfig::load(Some(p))?,
        None => {
            let echo = path.parent().map(|d| d.join(CONFIG_ECHO));
            match echo.filter(|p| p.exists()) {
                Some(p) => PipelineConfig::load(Some(&p))?,
                None => PipelineConfig::default(),
            }
        }
    };
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let params = ModelParams::from_bytes(&bytes).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let model = Model::from_params(cfg.model(), &params)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok((model, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub class: Class,
    pub score: f32,
    pub malignant_prob: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub image: String,
    pub detections: Vec<DetectionRecord>,
}

impl DetectionFile {
    pub fn new(image: String, dets: &[Detection]) -> Self {
        let detections = dets
            .iter()
            .map(|d| DetectionRecord {
                x1: d.bbox.x1,
                y1: d.bbox.y1,
                x2: d.bbox.x2,
                y2: d.bbox.y2,
                class: d.class,
                score: d.score,
                malignant_prob: d.malignant_prob,
            })
            .collect();
        Self { image, detections }
    }

    pub fn to_detections(&self) -> CliResult<Vec<Detection>> {
        self.detections
            .iter()
            .map(|r| {
                Ok(Detection {
                    bbox: BBox::new(r.x1, r.y1, r.x2, r.y2).map_err(invalid)?,
                    class: r.class,
                    score: r.score,
                    malignant_prob: r.malignant_prob,
                })
            })
            .collect()
    }
}

fn cmd_detect(a: &DetectArgs, g: &GlobalArgs) -> CliResult<()> {
    let (model, cfg) = load_model(&a.model, g.config.as_deref())?;
    let files = if a.split != SplitPart::All {
        let ds = Dataset::open(&a.input)?;
        let m = ds
            .manifest()?
            .ok_or_else(|| CliError::validation(format!("{} has no manifest.json", a.input.display())))?;
        let ids = match a.split {
            SplitPart::Train => m.train,
            SplitPart::Val => m.val,
            _ => m.test,
        };
        ids.iter().map(|id| ds.image_path(id).map(Path::to_path_buf)).collect::<CliResult<Vec<_>>>()?
    } else {
        input_images(&a.input)?
    };
    io::prepare_out_dir(&a.out, g.overwrite)?;
    echo_config(&a.out, &cfg)?;
    let pre = Preprocessor::new(cfg.model_preprocess());
    for f in &files {
        let img = io::read_gray(f)?;
        let dets = detect(&img, &model, &pre, &cfg.detector).map_err(|e| CliError::runtime(format!("{}: {e}", f.display())))?;
        let id = io::stem(f);
        let rec = DetectionFile::new(file_name(f), &dets);
        io::write_file(&a.out.join(format!("{id}.json")), io::to_json_pretty(&rec))?;
        if !a.no_overlay {
            io::write_rgb_png(&a.out.join(format!("{id}.png")), &overlay::render_overlay(&img, &dets))?;
        }
        info!("{}: {} detections", file_name(f), dets.len());
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, mut cfg: PipelineConfig, g: &GlobalArgs) -> CliResult<()> {
    if let Some(t) = a.iou_threshold {
        cfg.eval.iou_threshold = t;
    }
    cfg.validate()?;
    let gt_dir = {
        let sub = a.gt.join(dataset::ANNOTATIONS_DIR);
        if sub.is_dir() {
            sub
        } else {
            a.gt.clone()
        }
    };
    if !gt_dir.is_dir() {
        return Err(CliError::validation(format!("{} is not a directory", a.gt.display())));
    }
    let preds = io::list_with(&a.pred, &["json"])?;
    let preds: Vec<PathBuf> = preds.into_iter().filter(|p| io::stem(p) != "config").collect();
    if preds.is_empty() {
        return Err(CliError::validation(format!("no detection files in {}", a.pred.display())));
    }
    let mut images = Vec::with_capacity(preds.len());
    for p in &preds {
        let id = io::stem(p);
        let gt_path = gt_dir.join(format!("{id}.json"));
        if !gt_path.is_file() {
            return Err(CliError::validation(format!("{id}: no ground truth file {}", gt_path.display())));
        }
        let pred: DetectionFile = io::read_json(p)?;
        let ground_truth: Vec<Annotation> = dataset::load_annotation_file(&gt_path)?;
        images.push(ImageResult {
            id,
            detections: pred.to_detections()?,
            ground_truth,
        });
    }
    let report = evaluate(&images, cfg.eval.iou_threshold);
    io::prepare_out_dir(&a.out, g.overwrite)?;
    echo_config(&a.out, &cfg)?;
    io::write_file(&a.out.join(REPORT_JSON), io::to_json_pretty(&report))?;
    emit_report(&report, &a.out)?;
    info!(
        "evaluated {} images at T={}: accuracy {}",
        report.n_images,
        report.threshold,
        report.metrics.accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

/// Writes metrics.csv, iou_table.csv, roc_points.csv and roc.svg.
pub fn emit_report(r: &MetricsReport, dir: &Path) -> CliResult<()> {
    io::write_file(&dir.join("metrics.csv"), metrics_csv(r))?;
    io::write_file(&dir.join("iou_table.csv"), iou_table_csv(r))?;
    io::write_file(&dir.join("roc_points.csv"), roc_points_csv(r))?;
    io::write_file(&dir.join("roc.svg"), roc_svg(r))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{:.2}%", 100.0 * x))
}

/// Markdown summary of a report beside the published reference values.
pub fn summary_markdown(r: &MetricsReport) -> String {
    let m = &r.metrics;
    let c = &r.confusion;
    let mut s = format!(
        "# Evaluation summary\n\n{} images, {} ground truth boxes, {} detections, IoU threshold {}.\n\n",
        r.n_images, r.n_ground_truth, r.n_detections, r.threshold
    );
    s.push_str("| T | detection rate | mean IoU | reference rate |\n|---|---|---|---|\n");
    for row in &r.iou_table {
        let reference = REFERENCE_RATES.iter().find(|(t, _)| *t == row.threshold).map(|&(_, v)| v);
        s.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            row.threshold,
            pct(row.detection_rate),
            pct(row.mean_iou),
            pct(reference)
        ));
    }
    s.push_str("\n| metric | value | reference |\n|---|---|---|\n");
    let values = [m.accuracy, m.sensitivity, m.specificity, m.precision, r.auc];
    for ((name, reference), v) in REFERENCE_METRICS.iter().zip(values) {
        s.push_str(&format!("| {name} | {} | {} |\n", pct(v), pct(Some(*reference))));
    }
    s.push_str(&format!(
        "\nConfusion (malignant positive): tp {}, fp {}, tn {}, fn {}.\n",
        c.tp, c.fp, c.tn, c.fn_
    ));
    s
}

fn cmd_report(a: &ReportArgs, g: &GlobalArgs) -> CliResult<()> {
    let path = if a.input.is_dir() { a.input.join(REPORT_JSON) } else { a.input.clone() };
    let report: MetricsReport = io::read_json(&path)?;
    io::prepare_out_dir(&a.out, g.overwrite)?;
    emit_report(&report, &a.out)?;
    io::write_file(&a.out.join("summary.md"), summary_markdown(&report))?;
    info!("wrote report files to {}", a.out.display());
    Ok(())
}

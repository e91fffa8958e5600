//! Command-line surface.
//!
//! Exit status: 0 on success, 1 when inputs fail validation or a statistic
//! is undefined, 2 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bootstrap::{BootstrapConfig, DEFAULT_INTERVAL, DEFAULT_REPLICATES, DEFAULT_SEED};
use crate::dataset::{
    self, load_dataset, read_detections, BreastScore, Dataset, DEFAULT_MODEL_ID, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::froc::{default_fp_grid, froc_bootstrap_band, froc_curve, operating_point};
use crate::geometry::{nms, NmsConfig, DEFAULT_NMS_IOU};
use crate::preprocess::{
    isotropic_resize, od_map, read_image, window_rescale, write_png, OdCalibration, ResizeConfig,
    WindowConfig, DEFAULT_LOWER_OFFSET, DEFAULT_MAX_LONG, DEFAULT_MAX_SHORT, DEFAULT_UPPER_OFFSET,
    RESIZE_KERNEL,
};
use crate::report::{self, FrocSummary, RocSummary, TOOL_NAME, TOOL_VERSION};
use crate::roc::{default_fpr_grid, roc_bootstrap, roc_curve, ScoredCase};
use crate::synth::{synth_generate, write_synth, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "cadeval",
    version,
    about = "Evaluate lesion-detection CAD output: NMS, image/breast scoring, ROC and FROC with bootstrap intervals, mammogram preprocessing."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for every random draw (bootstrap resamples, synthetic data).
    /// Synthetic specs use their own seed when this is not given; the
    /// bootstrap then uses 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Bootstrap replicates. The default 10000 is the replicate count used to
    /// report the reference INbreast ROC and FROC intervals.
    #[arg(long = "bootstrap", global = true, default_value_t = DEFAULT_REPLICATES, value_name = "N")]
    pub bootstrap: usize,

    /// Central percentile interval width in percent. The default 95 matches the
    /// reference 95 percentile intervals.
    #[arg(long, global = true, default_value_t = DEFAULT_INTERVAL, value_name = "PERCENT")]
    pub ci: f64,

    /// IoU threshold of the final class-wise NMS. The default 0.1 is the
    /// setting of the reference Faster R-CNN mammography detector.
    #[arg(long = "nms-iou", global = true, default_value_t = DEFAULT_NMS_IOU, value_name = "IOU")]
    pub nms_iou: f64,

    /// FROC operating points in false-positive marks per image. The defaults
    /// 0.3 and 3.0 are the reference detector's headline operating points
    /// (90% and 100% lesion sensitivity on INbreast).
    #[arg(
        long = "fp-targets",
        global = true,
        value_delimiter = ',',
        default_values_t = [0.3, 3.0],
        value_name = "LIST"
    )]
    pub fp_targets: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize mammograms: mode windowing or optical-density mapping, then
    /// isotropic downscaling.
    Preprocess(PreprocessArgs),
    /// Apply greedy class-wise NMS to a JSON-lines detection file.
    Nms(NmsArgs),
    /// Collapse detections into image scores (max malignant score), ensemble
    /// them across models (mean) and into breast scores (mean over images).
    Aggregate(AggregateArgs),
    /// Breast-level ROC curve, AUC and bootstrap percentile interval.
    EvalRoc(EvalRocArgs),
    /// Lesion-level FROC curve with operating points and bootstrap band.
    EvalFroc(EvalFrocArgs),
    /// Generate a seeded synthetic dataset with a known FROC curve.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntensityMode {
    /// Clip to [mode - lower, mode + upper] and rescale to 0..255 (FFDM).
    Window,
    /// Map gray values to optical density with a scanner calibration (digitized film).
    Od,
    /// Keep intensities; only resize.
    None,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Grayscale PNG or PGM inputs (8 or 16 bit).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory for `<stem>.png` and `<stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = IntensityMode::Window)]
    pub mode: IntensityMode,
    /// Effective bit depth of 16-bit containers (e.g. 12 or 14).
    #[arg(long)]
    pub bit_depth: Option<u8>,
    /// Window extent below the histogram mode. Default 500 as in the
    /// reference INbreast windowing.
    #[arg(long, default_value_t = DEFAULT_LOWER_OFFSET)]
    pub lower_offset: u32,
    /// Window extent above the histogram mode. Default 800 as in the
    /// reference INbreast windowing.
    #[arg(long, default_value_t = DEFAULT_UPPER_OFFSET)]
    pub upper_offset: u32,
    /// Intensities at or below this value are background and ignored by the mode.
    #[arg(long, default_value_t = 0)]
    pub background_threshold: u32,
    /// JSON optical-density calibration (`id`, `slope`, `intercept`,
    /// `od_min`, `od_max`, `invert`); required for `--mode od`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Longest side limit. Default 2100 as in the reference training resolution.
    #[arg(long, default_value_t = DEFAULT_MAX_LONG)]
    pub max_long: u32,
    /// Shortest side limit. Default 1700 as in the reference training resolution.
    #[arg(long, default_value_t = DEFAULT_MAX_SHORT)]
    pub max_short: u32,
    /// Skip resizing.
    #[arg(long)]
    pub no_resize: bool,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    /// JSON-lines detection files.
    #[arg(long = "detections", required = true)]
    pub detections: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Detection files overriding those listed in the manifest.
    #[arg(long = "detections")]
    pub detections: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Output scores file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalRocArgs {
    /// Dataset manifest; breast scores are aggregated from its detections.
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "detections", requires = "manifest")]
    pub detections: Vec<PathBuf>,
    /// Scores file written by `aggregate`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalFrocArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Model whose detections are evaluated; needed when several are present.
    #[arg(long)]
    pub model: Option<String>,
    /// Treat detections as already suppressed.
    #[arg(long)]
    pub no_nms: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 100 images, 50 lesions; 0.3 marks per image at sensitivity 0.9.
    SparseMarks,
    /// SparseMarks plus 3 marks per image at sensitivity 1.0.
    FullSensitivity,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in specification.
    #[arg(
        long,
        value_enum,
        conflicts_with = "spec",
        required_unless_present = "spec"
    )]
    pub preset: Option<Preset>,
    /// Specification file (JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Scores file written by `aggregate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub models: Vec<String>,
    pub images: Vec<ImageScoreRecord>,
    pub breasts: Vec<BreastScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScoreRecord {
    pub image_id: String,
    pub score: f64,
    pub per_model: BTreeMap<String, f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Nms(a) => cmd_nms(g, a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::EvalRoc(a) => cmd_eval_roc(g, a),
        Command::EvalFroc(a) => cmd_eval_froc(g, a),
        Command::Synth(a) => cmd_synth(g, a),
    }
}

fn bootstrap_config(g: &GlobalOpts) -> Result<BootstrapConfig> {
    BootstrapConfig::new(g.bootstrap, g.ci, g.seed.unwrap_or(DEFAULT_SEED))
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(
        || p.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn cmd_nms(g: &GlobalOpts, a: &NmsArgs) -> Result<()> {
    let cfg = NmsConfig::new(g.nms_iou)?;
    let mut all = dataset::ModelDetections::new();
    for p in &a.detections {
        for (model, dets) in read_detections(p, DEFAULT_MODEL_ID)? {
            all.entry(model).or_default().extend(dets);
        }
    }
    let mut out = dataset::ModelDetections::new();
    let mut before = 0;
    let mut after = 0;
    for (model, dets) in all {
        let mut by_image: BTreeMap<String, Vec<_>> = BTreeMap::new();
        before += dets.len();
        for d in dets {
            by_image.entry(d.image_id().to_owned()).or_default().push(d);
        }
        let mut kept = Vec::new();
        for group in by_image.values() {
            kept.extend(nms(group, &cfg)?);
        }
        after += kept.len();
        out.insert(model, kept);
    }
    dataset::write_detections(&a.out, &out)?;
    log::info!("nms kept {after} of {before} detections");
    Ok(())
}

fn aggregate_scores(ds: &Dataset) -> Result<ScoresFile> {
    let models: Vec<String> = ds.model_ids().into_iter().map(str::to_owned).collect();
    let per_model: Vec<Vec<_>> = models
        .iter()
        .map(|m| ds.image_scores(m))
        .collect::<Result<_>>()?;
    let ensemble = ds.ensemble_image_scores()?;
    let images = ensemble
        .into_iter()
        .enumerate()
        .map(|(i, s)| ImageScoreRecord {
            image_id: s.image_id,
            score: s.score,
            per_model: models
                .iter()
                .zip(&per_model)
                .map(|(m, scores)| (m.clone(), scores[i].score))
                .collect(),
        })
        .collect();
    Ok(ScoresFile {
        format_version: FORMAT_VERSION,
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        models,
        images,
        breasts: ds.breast_scores()?,
    })
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<()> {
    let ds = load_dataset(&a.data.manifest, &a.data.detections)?;
    let scores = aggregate_scores(&ds)?;
    dataset::write_file(&a.out, &report::json_bytes(&scores))
}

fn read_scores(path: &Path) -> Result<ScoresFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: ScoresFile = serde_json::from_str(&text)
        .map_err(|e| Error::validation(path.display().to_string(), e.to_string()))?;
    if s.format_version != FORMAT_VERSION {
        return Err(Error::validation(
            path.display().to_string(),
            format!("unsupported format_version {}", s.format_version),
        ));
    }
    Ok(s)
}

fn cmd_eval_roc(g: &GlobalOpts, a: &EvalRocArgs) -> Result<()> {
    let (breasts, source) = match (&a.scores, &a.manifest) {
        (Some(p), _) => (read_scores(p)?.breasts, json!({ "scores": file_name(p) })),
        (None, Some(m)) => {
            let ds = load_dataset(m, &a.detections)?;
            (
                ds.breast_scores()?,
                json!({
                    "manifest": file_name(m),
                    "detections": a.detections.iter().map(|p| file_name(p)).collect::<Vec<_>>(),
                }),
            )
        }
        (None, None) => unreachable!("clap requires --scores or --manifest"),
    };
    let cases: Vec<ScoredCase> = breasts
        .iter()
        .map(|b| ScoredCase::new(b.score, b.label.is_positive()))
        .collect();
    let cfg = bootstrap_config(g)?;
    let curve = roc_curve(&cases)?;
    let boot = roc_bootstrap(&cases, &cfg, &default_fpr_grid())?;
    let n_pos = cases.iter().filter(|c| c.positive).count();
    let config = json!({
        "source": source,
        "unit": "breast",
        "bootstrap": cfg.replicates(),
        "ci": cfg.interval(),
        "seed": cfg.seed(),
        "band_grid": "fpr 0.00..1.00 step 0.01",
    });
    let summary = RocSummary::new(&boot, n_pos, cases.len() - n_pos, config);
    report::write_roc_report(&a.out, &curve, &boot, &summary)?;
    println!(
        "AUC = {:.4} ({}% interval {:.4} to {:.4}, {} replicates)",
        boot.auc, boot.interval, boot.lo, boot.hi, boot.replicates
    );
    Ok(())
}

fn cmd_eval_froc(g: &GlobalOpts, a: &EvalFrocArgs) -> Result<()> {
    let mut ds = load_dataset(&a.data.manifest, &a.data.detections)?;
    let model = match (&a.model, ds.model_ids().as_slice()) {
        (Some(m), _) => Some(m.clone()),
        (None, []) => None,
        (None, [only]) => Some((*only).to_owned()),
        (None, many) => {
            return Err(Error::InvalidInput(format!(
                "detections from several models ({}); choose one with --model",
                many.join(", ")
            )))
        }
    };
    let nms_cfg = if a.no_nms {
        None
    } else {
        let cfg = NmsConfig::new(g.nms_iou)?;
        ds.apply_nms(&cfg)?;
        Some(cfg)
    };
    if let Some(t) = g.fp_targets.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Config(format!(
            "FP targets must be finite and nonnegative, got {t}"
        )));
    }

    let images = ds.froc_images(model.as_deref())?;
    let curve = froc_curve(&images)?;
    let cfg = bootstrap_config(g)?;
    let grid = default_fp_grid(&curve, &g.fp_targets);
    let band = froc_bootstrap_band(&images, &cfg, &grid)?;
    let ops: Vec<_> = g
        .fp_targets
        .iter()
        .map(|&t| operating_point(&curve, t))
        .collect();
    let config = json!({
        "manifest": file_name(&a.data.manifest),
        "detections": a.data.detections.iter().map(|p| file_name(p)).collect::<Vec<_>>(),
        "model": model,
        "nms_iou": nms_cfg.map(|c| c.iou_threshold()),
        "fp_targets": g.fp_targets,
        "bootstrap": cfg.replicates(),
        "ci": cfg.interval(),
        "seed": cfg.seed(),
        "match_rule": "detection center inside lesion box, edges inclusive",
    });
    let summary = FrocSummary::new(&curve, &ops, Some(&band), config);
    report::write_froc_report(&a.out, &curve, Some(&band), &summary)?;
    for op in &ops {
        println!(
            "{} FP/image: sensitivity {:.4} at threshold {} ({} FP/image achieved)",
            op.target_fp_per_image, op.sensitivity, op.threshold, op.fp_per_image
        );
    }
    Ok(())
}

fn cmd_synth(g: &GlobalOpts, a: &SynthArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (_, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| Error::validation(p.display().to_string(), e.to_string()))?
        }
        (Some(Preset::SparseMarks), None) => SynthSpec::sparse_marks(),
        (Some(Preset::FullSensitivity), None) => SynthSpec::full_sensitivity(),
        (None, None) => unreachable!("clap requires --preset or --spec"),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let out = synth_generate(&spec)?;
    write_synth(&a.out, &out)
}

/// JSON sidecar written next to every preprocessed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSidecar {
    pub format_version: u32,
    pub source: String,
    pub source_width: u32,
    pub source_height: u32,
    pub source_bit_depth: u8,
    pub width: u32,
    pub height: u32,
    pub intensity: String,
    pub mode: Option<u16>,
    pub window: Option<[i64; 2]>,
    pub calibration: Option<String>,
    pub scale: f64,
    pub kernel: Option<String>,
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let window = WindowConfig {
        lower_offset: a.lower_offset,
        upper_offset: a.upper_offset,
        background_threshold: a.background_threshold,
    };
    let resize = ResizeConfig::new(a.max_long, a.max_short)?;
    let calibration = match (&a.mode, &a.calibration) {
        (IntensityMode::Od, None) => {
            return Err(Error::Config("--mode od needs --calibration".into()))
        }
        (_, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let cal: OdCalibration = serde_json::from_str(&text)
                .map_err(|e| Error::validation(p.display().to_string(), e.to_string()))?;
            cal.validate()?;
            Some(cal)
        }
        (_, None) => None,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    a.inputs.par_iter().try_for_each(|input| -> Result<()> {
        let src = read_image(input, a.bit_depth)?;
        let mut side = PreprocessSidecar {
            format_version: FORMAT_VERSION,
            source: file_name(input),
            source_width: src.width(),
            source_height: src.height(),
            source_bit_depth: src.bit_depth(),
            width: src.width(),
            height: src.height(),
            intensity: format!("{:?}", a.mode).to_lowercase(),
            mode: None,
            window: None,
            calibration: None,
            scale: 1.0,
            kernel: None,
        };
        let mapped = match a.mode {
            IntensityMode::Window => {
                let w = window_rescale(&src, &window)
                    .map_err(|e| Error::validation(input.display().to_string(), e.to_string()))?;
                side.mode = Some(w.mode);
                side.window = Some([w.lo, w.hi]);
                w.image
            }
            IntensityMode::Od => {
                let cal = calibration.as_ref().expect("checked above");
                side.calibration = Some(cal.id.clone());
                od_map(&src, cal)?
            }
            IntensityMode::None => src,
        };
        let out_img = if a.no_resize {
            mapped
        } else {
            let r = isotropic_resize(&mapped, &resize);
            side.scale = r.scale;
            side.kernel = Some(RESIZE_KERNEL.to_owned());
            r.image
        };
        side.width = out_img.width();
        side.height = out_img.height();
        let stem = input
            .file_stem()
            .map_or_else(|| "image".to_owned(), |s| s.to_string_lossy().into_owned());
        write_png(&a.out.join(format!("{stem}.png")), &out_img)?;
        dataset::write_file(
            &a.out.join(format!("{stem}.json")),
            &report::json_bytes(&side),
        )
    })
}

//! Command-line surface: `validate`, `eval`, `track`, `synth`, `baseline`.
//!
//! Exit status is 0 on success, 1 when validation finds violations and 2 on
//! parse, schema or configuration errors. Per-video work runs on a worker
//! pool sized by `--workers`, the `PVSG_WORKERS` environment variable, or the
//! available parallelism, in that order.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{fit_prior, predict_graph, BaselineConfig, Boundary, PredicatePrior, SmoothingKernel};
use crate::bundle::{self, read_bundle, read_bundle_docs, read_json, to_json_pretty, write_bundle, write_file, MaskDoc};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, render_grid, EvalConfig, EvalReport, TopKScope};
use crate::model::{validate_scene_graph, SceneGraph, VideoMeta, Vocabulary};
use crate::rle::PanopticFrame;
use crate::synth::{generate, perturb, random_script, CorruptionLedger, Motion, NoiseConfig, RelationStyle, SceneScript, ScriptParams};
use crate::track::{Tracker, TrackerConfig};

pub const WORKERS_ENV: &str = "PVSG_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "pvsg", version, about = "Panoptic video scene graph evaluation and mask-tube toolkit")]
pub struct Cli {
    /// Worker threads for per-video work
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check bundles for structural violations
    Validate(ValidateArgs),
    /// Score a prediction bundle against ground truth
    Eval(EvalArgs),
    /// Link per-frame panoptic segments into tubes
    Track(TrackArgs),
    /// Render scene scripts and a corrupted copy with its ledger
    Synth(SynthArgs),
    /// Predict relations with the class-prior baseline
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Bundle directories
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScopeArg {
    PerVideo,
    Corpus,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub gt: PathBuf,
    pub pred: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 50, 100])]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.1])]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub gate: f64,
    /// Apply the top-K cut per video or over the pooled corpus
    #[arg(long, value_enum, default_value_t = ScopeArg::PerVideo)]
    pub top_k_scope: ScopeArg,
    /// Row label in the printed grid
    #[arg(long, default_value = "prediction")]
    pub label: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Bundle directory, or a single mask document
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub iou_gate: f64,
    #[arg(long, default_value_t = 10)]
    pub max_age: u32,
    /// Track stuff classes like things instead of merging them per class
    #[arg(long)]
    pub no_stuff_merge: bool,
    /// Vocabulary for a single mask document input
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output bundle directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MotionArg {
    Lanes,
    Crossing,
    Free,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RelationsArg {
    Random,
    ClassDetermined,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene script, or a JSON array of scripts
    #[arg(required_unless_present = "random")]
    pub script: Option<PathBuf>,
    /// Generate this many random scripts instead of reading one
    #[arg(long, conflicts_with = "script")]
    pub random: Option<u32>,
    #[arg(long, value_enum, default_value_t = MotionArg::Lanes)]
    pub motion: MotionArg,
    #[arg(long, value_enum, default_value_t = RelationsArg::Random)]
    pub relations: RelationsArg,
    #[arg(long, default_value_t = 60)]
    pub frames: u32,
    #[arg(long, default_value_t = 5)]
    pub objects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise configuration; no corruption when absent
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Mask gate recorded in the ledger
    #[arg(long, default_value_t = 0.5)]
    pub gate: f64,
    /// Volume thresholds recorded in the ledger
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.1])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BoundaryArg {
    Renormalize,
    ZeroPad,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// Training bundle for the predicate prior
    pub train_gt: PathBuf,
    /// Bundle of tubes to predict relations for
    pub test_tubes: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub theta: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Renormalize)]
    pub boundary: BoundaryArg,
    /// Comma-separated symmetric kernel weights
    #[arg(long, value_delimiter = ',')]
    pub kernel: Option<Vec<f64>>,
    /// Output bundle directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fitted prior here
    #[arg(long)]
    pub prior_out: Option<PathBuf>,
}

/// Loads both bundles and evaluates them; vocabularies must agree.
pub fn evaluate_bundles(gt: &Path, pred: &Path, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let gt = read_bundle(gt)?;
    let pred = read_bundle(pred)?;
    if gt.vocabulary != pred.vocabulary {
        return Err(Error::Config("ground-truth and prediction bundles use different vocabularies".into()));
    }
    evaluate(&gt.graphs, &pred.graphs, cfg, &gt.vocabulary)
}

/// Canonical report text, as written by `eval --out`.
pub fn report_json(report: &EvalReport) -> String {
    to_json_pretty(report)
}

/// Tracks one video's frames into a relation-free graph.
pub fn track_video(meta: &VideoMeta, frames: &[PanopticFrame], cfg: &TrackerConfig, vocab: &Vocabulary) -> Result<SceneGraph> {
    let mut tracker = Tracker::new(cfg.clone(), vocab)?.with_geometry(meta.height, meta.width);
    for f in frames {
        tracker.step(f)?;
    }
    let mut g = SceneGraph::new(meta.clone());
    g.tubes = tracker.finish();
    Ok(g)
}

/// Tracks every video of a bundle directory, or a lone mask document.
pub fn track_input(input: &Path, cfg: &TrackerConfig, vocab_path: Option<&Path>) -> Result<(Vocabulary, Vec<SceneGraph>)> {
    cfg.validate()?;
    if input.is_dir() {
        let (vocab, docs) = read_bundle_docs(input)?;
        let graphs: Vec<Result<SceneGraph>> = docs
            .par_iter()
            .map(|d| {
                let mut meta = VideoMeta::new(d.graph.video_id.clone(), d.graph.num_frames, d.graph.height, d.graph.width)?;
                meta.fps = d.graph.fps.unwrap_or(0.0);
                let frames = bundle::mask_doc_frames(&d.masks, &d.masks_file)?;
                track_video(&meta, &frames, cfg, &vocab)
            })
            .collect();
        return Ok((vocab, graphs.into_iter().collect::<Result<_>>()?));
    }
    let vocab = match vocab_path {
        Some(p) => read_json(p)?,
        None => Vocabulary::default_sized(),
    };
    let doc: MaskDoc = read_json(input)?;
    let meta = VideoMeta::new(doc.video_id.clone(), doc.num_frames, doc.height, doc.width)?;
    let frames = bundle::mask_doc_frames(&doc, &input.display().to_string())?;
    let g = track_video(&meta, &frames, cfg, &vocab)?;
    Ok((vocab, vec![g]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedCell {
    pub threshold: f64,
    pub recall: f64,
    pub mean_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerFile {
    pub predicted: Vec<PredictedCell>,
    pub videos: Vec<CorruptionLedger>,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub vocabulary: Vocabulary,
    pub gt: Vec<SceneGraph>,
    pub pred: Vec<SceneGraph>,
    pub ledger: LedgerFile,
    pub warnings: Vec<String>,
}

/// Generates every script and corrupts video `i` with seed `noise.seed + i`.
pub fn synth_corpus(scripts: &[SceneScript], seed: u64, noise: &NoiseConfig, eval: &EvalConfig) -> Result<SynthOutput> {
    noise.validate()?;
    eval.validate()?;
    let vocabulary = match scripts.first() {
        Some(s) => s.vocabulary(),
        None => Vocabulary::default_sized(),
    };
    if scripts.iter().any(|s| s.vocabulary() != vocabulary) {
        return Err(Error::Config("scripts disagree on vocabulary sizes".into()));
    }
    let per_video: Vec<Result<_>> = scripts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let scene = generate(s, seed.wrapping_add(i as u64))?;
            let video_noise = NoiseConfig { seed: noise.seed.wrapping_add(i as u64), ..noise.clone() };
            let (pred, ledger) = perturb(&scene.graph, &video_noise, eval)?;
            Ok((scene.graph, pred, ledger, scene.warnings))
        })
        .collect();
    let (mut gt, mut pred, mut ledgers, mut warnings) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in per_video {
        let (g, p, l, w) = r?;
        gt.push(g);
        pred.push(p);
        ledgers.push(l);
        warnings.extend(w);
    }
    let predicted = eval
        .vol_thresholds
        .iter()
        .enumerate()
        .map(|(ti, &threshold)| PredictedCell {
            threshold,
            recall: CorruptionLedger::pooled_recall(&ledgers, ti),
            mean_recall: CorruptionLedger::mean_recall(&ledgers, ti),
        })
        .collect();
    Ok(SynthOutput { vocabulary, gt, pred, ledger: LedgerFile { predicted, videos: ledgers }, warnings })
}

/// Reads one script or a JSON array of scripts.
pub fn read_scripts(path: &Path) -> Result<Vec<SceneScript>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let file = path.display().to_string();
    let scripts = if text.trim_start().starts_with('[') {
        bundle::parse_json::<Vec<SceneScript>>(&text, &file)?
    } else {
        vec![bundle::parse_json::<SceneScript>(&text, &file)?]
    };
    for s in &scripts {
        s.validate()?;
    }
    Ok(scripts)
}

/// Fits the prior on `train` and predicts relations for every test graph.
pub fn baseline_bundles(
    train: &Path,
    test: &Path,
    cfg: &BaselineConfig,
    alpha: f64,
) -> Result<(Vocabulary, PredicatePrior, Vec<SceneGraph>, Vec<String>)> {
    cfg.validate()?;
    let train = read_bundle(train)?;
    let test = read_bundle(test)?;
    if train.vocabulary != test.vocabulary {
        return Err(Error::Config("training and test bundles use different vocabularies".into()));
    }
    let mut warnings = Vec::new();
    if train.graphs.iter().all(|g| g.relations.is_empty()) {
        warnings.push("training set has no relations; using a uniform prior".to_string());
    }
    let prior = fit_prior(&train.graphs, &train.vocabulary, alpha)?;
    let preds: Vec<Result<SceneGraph>> = test.graphs.par_iter().map(|g| predict_graph(g, &prior, cfg)).collect();
    let preds = preds.into_iter().collect::<Result<_>>()?;
    Ok((test.vocabulary, prior, preds, warnings))
}

fn worker_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return if n == 0 { Err(Error::Config("--workers must be at least 1".into())) } else { Ok(Some(n)) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `args` and runs the command, writing to `out` and `err`.
/// Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = worker_count(cli.workers).and_then(|n| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = n {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| dispatch(&cli.command, out, err))
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn dispatch(cmd: &Command, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    match cmd {
        Command::Validate(a) => {
            let mut violations = 0usize;
            let mut videos = 0usize;
            for path in &a.paths {
                let b = read_bundle(path)?;
                videos += b.graphs.len();
                for g in &b.graphs {
                    for v in validate_scene_graph(g, &b.vocabulary) {
                        writeln!(out, "{}: {v}", g.meta.video_id).map_err(io_err)?;
                        violations += 1;
                    }
                }
            }
            writeln!(err, "{videos} videos checked, {violations} violations").map_err(io_err)?;
            Ok(if violations == 0 { 0 } else { 1 })
        }
        Command::Eval(a) => {
            let cfg = EvalConfig {
                k_values: a.k.clone(),
                vol_thresholds: a.thresholds.clone(),
                mask_gate: a.gate,
                top_k_scope: match a.top_k_scope {
                    ScopeArg::PerVideo => TopKScope::PerVideo,
                    ScopeArg::Corpus => TopKScope::Corpus,
                },
            };
            let report = evaluate_bundles(&a.gt, &a.pred, &cfg)?;
            for w in &report.warnings {
                writeln!(err, "warning: {w}").map_err(io_err)?;
            }
            if let Some(path) = &a.out {
                write_file(path, &report_json(&report))?;
            }
            write!(out, "{}", render_grid(&[(a.label.as_str(), &report)])).map_err(io_err)?;
            Ok(0)
        }
        Command::Track(a) => {
            let cfg = TrackerConfig { iou_gate: a.iou_gate, max_age: a.max_age, stuff_by_class: !a.no_stuff_merge };
            let (vocab, graphs) = track_input(&a.input, &cfg, a.vocab.as_deref())?;
            write_bundle(&a.out, &vocab, &graphs)?;
            let tubes: usize = graphs.iter().map(|g| g.tubes.len()).sum();
            writeln!(out, "{} videos, {tubes} tubes", graphs.len()).map_err(io_err)?;
            Ok(0)
        }
        Command::Synth(a) => {
            let scripts = match (&a.script, a.random) {
                (Some(p), _) => read_scripts(p)?,
                (None, Some(n)) => {
                    let params = ScriptParams {
                        num_frames: a.frames,
                        num_objects: a.objects,
                        motion: match a.motion {
                            MotionArg::Lanes => Motion::Lanes,
                            MotionArg::Crossing => Motion::Crossing,
                            MotionArg::Free => Motion::Free,
                        },
                        relations: match a.relations {
                            RelationsArg::Random => RelationStyle::Random,
                            RelationsArg::ClassDetermined => RelationStyle::ClassDetermined,
                        },
                        ..Default::default()
                    };
                    (0..u64::from(n)).map(|i| random_script(a.seed.wrapping_add(i), &params)).collect::<Result<_>>()?
                }
                (None, None) => return Err(Error::Config("need a script path or --random".into())),
            };
            let noise = match &a.noise {
                Some(p) => read_json(p)?,
                None => NoiseConfig::default(),
            };
            let eval = EvalConfig { vol_thresholds: a.thresholds.clone(), mask_gate: a.gate, ..Default::default() };
            let s = synth_corpus(&scripts, a.seed, &noise, &eval)?;
            for w in &s.warnings {
                writeln!(err, "warning: {w}").map_err(io_err)?;
            }
            write_bundle(&a.out_dir.join("gt"), &s.vocabulary, &s.gt)?;
            write_bundle(&a.out_dir.join("pred"), &s.vocabulary, &s.pred)?;
            write_file(&a.out_dir.join("ledger.json"), &to_json_pretty(&s.ledger))?;
            for c in &s.ledger.predicted {
                writeln!(out, "thre={}: predicted R = {}, mR = {}", c.threshold, c.recall, c.mean_recall).map_err(io_err)?;
            }
            Ok(0)
        }
        Command::Baseline(a) => {
            let kernel = match &a.kernel {
                Some(w) => SmoothingKernel::new(w.clone())?,
                None => SmoothingKernel::default(),
            };
            let cfg = BaselineConfig {
                theta: a.theta,
                budget: a.budget as usize,
                kernel,
                boundary: match a.boundary {
                    BoundaryArg::Renormalize => Boundary::Renormalize,
                    BoundaryArg::ZeroPad => Boundary::ZeroPad,
                },
            };
            let (vocab, prior, preds, warnings) = baseline_bundles(&a.train_gt, &a.test_tubes, &cfg, a.alpha)?;
            for w in &warnings {
                writeln!(err, "warning: {w}").map_err(io_err)?;
            }
            write_bundle(&a.out, &vocab, &preds)?;
            if let Some(p) = &a.prior_out {
                write_file(p, &to_json_pretty(&prior))?;
            }
            let n: usize = preds.iter().map(|g| g.relations.len()).sum();
            writeln!(out, "{} videos, {n} predicted relations", preds.len()).map_err(io_err)?;
            Ok(0)
        }
    }
}

//! `seatrack` command line: generate synthetic sequences, forge triplets,
//! train the embedding network, track, evaluate, sweep and annotate.

mod error;

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use seatrack_core::embednet::{load_weights, save_weights, train, Architecture, Model, NetConfig, Optimizer, TrainConfig};
use seatrack_core::evaluation::{
    distance_matrix_report, evaluate, mean_mota, sweep, CostMetric, Matching, PreparedSequence, Selection,
    SweepStage, TrackerOverrides, DEFAULT_IOU_THRESHOLD,
};
use seatrack_core::io::{
    detections_by_frame, read_annotations, read_detections, write_annotations, write_atomic, AnnotationFile,
    SequenceOnDisk,
};
use seatrack_core::rng::derive_seed;
use seatrack_core::synth::{generate, preset, water_from_annotations, Preset, SceneConfig};
use seatrack_core::tracker::{run_sequence, AppearanceMetric, TrackerConfig};
use seatrack_core::triplet::{
    build_triplet_dataset, load_dataset, save_dataset, write_provenance, AugmentConfig, JitterConfig, TripletDataset,
    TripletSource,
};

pub use error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "seatrack", version, about = "Multi-object tracking with a learned appearance descriptor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic sequence (frames, ground truth, detections, water).
    Gen(GenArgs),
    /// Cut artificial triplets from annotated sequences.
    Sample(SampleArgs),
    /// Train the embedding network on triplet datasets.
    Train(TrainArgs),
    /// Track a sequence with a trained checkpoint.
    Track(TrackArgs),
    /// Score tracker output against ground truth.
    Eval(EvalArgs),
    /// Staged search over checkpoints, cost metrics and tracker parameters.
    Sweep(SweepArgs),
    /// Per-object embedding distance matrix.
    Report(ReportArgs),
    /// Serve the annotation editing API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scene description (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub resolution: Option<usize>,
    pub jitter: JitterConfig,
    pub augment: AugmentConfig,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Sequence manifest; repeat to pool several sequences.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Annotation file to use instead of the manifest's (single manifest only).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub samples_per_anchor: Option<usize>,
    /// Shear/rotate positives.
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFileConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    FcOnly,
    Conv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Triplet dataset; repeat to pool several.
    #[arg(long, required = true)]
    pub triplets: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Loss log (CSV); defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    SqEuclidean,
    Cosine,
}

#[derive(Debug, Args)]
pub struct TrackerFlags {
    /// Tracker parameters (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub cost_threshold: Option<f64>,
    #[arg(long)]
    pub init_distance: Option<f64>,
    #[arg(long)]
    pub n_init: Option<u32>,
    #[arg(long)]
    pub max_age: Option<u32>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

impl TrackerFlags {
    fn resolve(&self) -> Result<TrackerConfig> {
        let mut c: TrackerConfig = read_config(self.config.as_deref())?;
        set(&mut c.lambda, self.lambda);
        set(&mut c.cost_threshold, self.cost_threshold);
        set(&mut c.init_distance_threshold, self.init_distance);
        set(&mut c.n_init, self.n_init);
        set(&mut c.max_age, self.max_age);
        set(&mut c.budget, self.budget);
        set(
            &mut c.appearance_metric,
            self.metric.map(|m| match m {
                MetricArg::SqEuclidean => AppearanceMetric::SqEuclidean,
                MetricArg::Cosine => AppearanceMetric::Cosine,
            }),
        );
        set(&mut c.min_confidence, self.min_confidence);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Detections file to use instead of the manifest's.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame timings (CSV); defaults to `<out>.timings.csv`.
    #[arg(long)]
    pub timings: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
    /// Accepted for uniformity; tracking draws no random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only print the mean step time.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct MatchFlags {
    /// Match ground truth to tracks by centroid distance instead of IoU.
    #[arg(long)]
    pub centroid: bool,
    /// Centroid gate in pixels.
    #[arg(long, default_value_t = 20.0)]
    pub centroid_gate: f64,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
}

impl MatchFlags {
    fn matching(&self) -> Result<Matching> {
        if self.centroid {
            if !(self.centroid_gate >= 0.0) {
                return Err(Error::Usage("--centroid-gate must be non-negative".into()));
            }
            Ok(Matching::Centroid {
                max_distance: self.centroid_gate,
            })
        } else {
            if !(0.0..=1.0).contains(&self.iou_threshold) {
                return Err(Error::Usage("--iou-threshold must be in [0, 1]".into()));
            }
            Ok(Matching::Iou {
                threshold: self.iou_threshold,
            })
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth annotations.
    #[arg(long, required_unless_present = "manifest")]
    pub gt: Option<PathBuf>,
    /// Take the ground truth from this manifest.
    #[arg(long, conflicts_with = "gt")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub tracks: PathBuf,
    /// MOTA report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub matching: MatchFlags,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFileConfig {
    pub tracker: TrackerConfig,
    /// Empty means the default three stages.
    pub stages: Vec<SweepStage>,
    pub matching: Option<Matching>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Validation sequence; repeat to average MOTA over several.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Candidate checkpoint; repeat for several.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the stage tables and the chosen configuration.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Distance matrix (CSV); a JSON copy is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub max_samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Annotation file to edit (created on first save if missing).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of static files (the browser client).
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Centroid gate for pre-assignment, in pixels.
    #[arg(long, default_value_t = seatrack_annotate::DEFAULT_PREASSIGN_GATE)]
    pub gate: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Usage(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    require_file(path, "config file")?;
    let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    ensure_parent(path)?;
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

/// `<path>` with `suffix` appended after its stem, e.g. `a.ckpt` + `log.csv`
/// gives `a.log.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn load_sequence(manifest: &Path) -> Result<SequenceOnDisk> {
    require_file(manifest, "manifest")?;
    Ok(SequenceOnDisk::load(manifest)?)
}

fn load_model(path: &Path) -> Result<Model> {
    require_file(path, "checkpoint")?;
    let (cfg, w) = load_weights(path)?;
    Ok(Model::new(cfg, w)?)
}

fn sequence_annotations(seq: &SequenceOnDisk, explicit: Option<&Path>) -> Result<AnnotationFile> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => seq.annotations_path()?,
    };
    require_file(&path, "annotations file")?;
    Ok(read_annotations(&path)?)
}

fn sequence_detections(seq: &SequenceOnDisk, explicit: Option<&Path>) -> Result<Vec<Vec<seatrack_core::geometry::Detection>>> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => seq.detections_path()?,
    };
    require_file(&path, "detections file")?;
    Ok(detections_by_frame(&read_detections(&path)?, seq.manifest.frame_count)?)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let (mut scene, default_name) = match (&a.preset, &a.config) {
        (_, Some(path)) => (read_config::<SceneConfig>(Some(path))?, "sequence".to_string()),
        (Some(p), None) => {
            let p: Preset = p.parse()?;
            (preset(p, 0), p.name().to_lowercase())
        }
        (None, None) => return Err(Error::Usage("gen needs --preset or --config".into())),
    };
    set(&mut scene.seed, a.seed);
    set(&mut scene.frame_count, a.frames);
    let name = a.name.unwrap_or(default_name);
    let seq = generate(&name, &scene)?;
    let manifest = seq.write_to_dir(&a.out)?;
    println!(
        "{}: {} frames, {} ground-truth boxes, {} detections -> {}",
        name,
        scene.frame_count,
        seq.ground_truth.len(),
        seq.detections.len(),
        manifest.display()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let mut cfg: SampleConfig = read_config(a.config.as_deref())?;
    set(&mut cfg.resolution, a.resolution.map(Some));
    set(&mut cfg.jitter.samples_per_anchor, a.samples_per_anchor);
    set(&mut cfg.jitter.seed, a.seed);
    if a.augment {
        cfg.augment.enabled = true;
    }
    let resolution = cfg.resolution.unwrap_or(NetConfig::default().patch_resolution);
    if a.annotations.is_some() && a.manifest.len() > 1 {
        return Err(Error::Usage("--annotations needs exactly one --manifest".into()));
    }
    let mut parts = Vec::with_capacity(a.manifest.len());
    for (i, m) in a.manifest.iter().enumerate() {
        let seq = load_sequence(m)?;
        let n = seq.manifest.frame_count;
        let images = seq.load_images()?;
        let annotations = sequence_annotations(&seq, a.annotations.as_deref())?;
        let water = match seq.water_path() {
            Ok(p) if p.exists() => water_from_annotations(&read_annotations(&p)?, n),
            _ => Vec::new(),
        };
        let jitter = JitterConfig {
            seed: if i == 0 { cfg.jitter.seed } else { derive_seed(cfg.jitter.seed, &[i as u64]) },
            ..cfg.jitter
        };
        let boxes = annotations.boxes();
        let source = TripletSource {
            frames: &images[..],
            annotations: &boxes,
            water: &water,
        };
        parts.push(build_triplet_dataset(&source, &jitter, &cfg.augment, resolution)?);
    }
    let ds = TripletDataset::concat(parts)?;
    ensure_parent(&a.out)?;
    save_dataset(&a.out, &ds)?;
    write_provenance(sibling(&a.out, "provenance.json"), &ds)?;
    println!(
        "{} triplets at {}x{} from {} anchors ({} positive boxes skipped, objects excluded: {:?}) -> {}",
        ds.len(),
        resolution,
        resolution,
        ds.report.anchors,
        ds.report.skipped_positive_boxes,
        ds.report.excluded_objects,
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainFileConfig = read_config(a.config.as_deref())?;
    set(
        &mut cfg.net.architecture,
        a.arch.map(|x| match x {
            ArchArg::FcOnly => Architecture::FcOnly,
            ArchArg::Conv => Architecture::Conv,
        }),
    );
    set(&mut cfg.net.margin, a.margin);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.train.learning_rate, a.learning_rate);
    set(
        &mut cfg.train.optimizer,
        a.optimizer.map(|o| match o {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        }),
    );
    set(&mut cfg.train.seed, a.seed);
    cfg.train.log_path = Some(a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.csv")));
    cfg.net.validate()?;
    cfg.train.validate()?;

    let mut parts = Vec::new();
    for p in &a.triplets {
        require_file(p, "triplet dataset")?;
        parts.push(load_dataset(p)?);
    }
    let ds = TripletDataset::concat(parts)?;
    if ds.resolution != cfg.net.patch_resolution {
        return Err(Error::Usage(format!(
            "triplets are {}x{} but the network expects {}x{} patches",
            ds.resolution, ds.resolution, cfg.net.patch_resolution, cfg.net.patch_resolution
        )));
    }
    ensure_parent(&a.out)?;
    if let Some(log) = &cfg.train.log_path {
        ensure_parent(log)?;
    }
    let (weights, log) = match train(&cfg.net, &cfg.train, &ds.triplets) {
        Ok(r) => r,
        Err(seatrack_core::Error::Diverged { epoch, step, last_good }) => {
            let keep = sibling(&a.out, "last_good.ckpt");
            save_weights(&keep, &cfg.net, &last_good)?;
            eprintln!("last finite weights saved to {}", keep.display());
            return Err(seatrack_core::Error::Diverged { epoch, step, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    save_weights(&a.out, &cfg.net, &weights)?;
    for (epoch, loss) in log.epoch_means().iter().enumerate() {
        println!("epoch {epoch}: mean loss {loss:.6}");
    }
    println!("{} triplets, checkpoint -> {}", ds.len(), a.out.display());
    Ok(())
}

fn cmd_track(a: TrackArgs) -> Result<()> {
    let tracker = a.tracker.resolve()?;
    let seq = load_sequence(&a.manifest)?;
    let model = load_model(&a.checkpoint)?;
    let per_frame = sequence_detections(&seq, a.detections.as_deref())?;
    let images = seq.load_images()?;
    let run = run_sequence(
        &tracker,
        &model,
        &images[..],
        &per_frame,
        seq.manifest.image_diagonal(),
        &seq.manifest.name,
    )?;
    ensure_parent(&a.out)?;
    write_annotations(&a.out, &run.output)?;
    let timings = a.timings.clone().unwrap_or_else(|| sibling(&a.out, "timings.csv"));
    ensure_parent(&timings)?;
    run.write_timings(&timings)?;
    if !a.quiet {
        for t in &run.timings {
            println!("frame {}: {:.3} ms", t.frame_id, t.step_ms);
        }
    }
    println!(
        "mean step time {:.3} ms over {} frames; tracks -> {}",
        run.mean_step_ms(),
        run.timings.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let matching = a.matching.matching()?;
    let gt = match (&a.gt, &a.manifest) {
        (Some(p), _) => {
            require_file(p, "ground-truth file")?;
            read_annotations(p)?
        }
        (None, Some(m)) => sequence_annotations(&load_sequence(m)?, None)?,
        (None, None) => return Err(Error::Usage("eval needs --gt or --manifest".into())),
    };
    require_file(&a.tracks, "tracks file")?;
    let tracks = read_annotations(&a.tracks)?;
    let report = evaluate(&gt, &tracks, matching)?;
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        report.write(out)?;
    }
    println!(
        "MOTA {:.4} over {} scored frames ({} identity switches)",
        report.mota, report.frames_scored, report.total_switches
    );
    Ok(())
}

/// Candidates used when a sweep config lists no stages.
pub fn default_stages(checkpoints: usize) -> Vec<SweepStage> {
    vec![
        SweepStage::Checkpoints((0..checkpoints).collect()),
        SweepStage::CostMetrics(vec![CostMetric::Combined, CostMetric::Appearance, CostMetric::Distance]),
        SweepStage::TrackerParams(vec![
            TrackerOverrides::default(),
            TrackerOverrides {
                cost_threshold: Some(0.1),
                ..Default::default()
            },
            TrackerOverrides {
                cost_threshold: Some(0.3),
                ..Default::default()
            },
            TrackerOverrides {
                n_init: Some(2),
                ..Default::default()
            },
            TrackerOverrides {
                budget: Some(10),
                ..Default::default()
            },
        ]),
    ]
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    checkpoints: &'a [PathBuf],
    sequences: &'a [PathBuf],
    best_checkpoint: &'a Path,
    outcome: &'a seatrack_core::evaluation::SweepOutcome,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg: SweepFileConfig = read_config(a.config.as_deref())?;
    cfg.tracker.validate()?;
    let stages = if cfg.stages.is_empty() {
        default_stages(a.checkpoint.len())
    } else {
        cfg.stages.clone()
    };
    for s in &stages {
        if let SweepStage::Checkpoints(c) = s {
            if let Some(bad) = c.iter().find(|&&i| i >= a.checkpoint.len()) {
                return Err(Error::Usage(format!(
                    "sweep references checkpoint {bad} but only {} were given",
                    a.checkpoint.len()
                )));
            }
        }
    }
    let matching = cfg.matching.unwrap_or_default();
    let models = a.checkpoint.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    let mut prepared = Vec::new();
    for m in &a.manifest {
        let seq = load_sequence(m)?;
        let gt = sequence_annotations(&seq, None)?;
        let dets = sequence_detections(&seq, None)?;
        let images = seq.load_images()?;
        prepared.push(PreparedSequence::prepare(
            &seq.manifest.name,
            &images[..],
            &dets,
            gt,
            seq.manifest.image_diagonal(),
            &models,
        )?);
    }
    let base = Selection {
        checkpoint: 0,
        tracker: cfg.tracker.clone(),
    };
    let outcome = sweep(&stages, base, |sel| mean_mota(&prepared, sel, matching))?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Usage(format!("cannot create {}: {e}", a.out.display())))?;
    for (k, t) in outcome.tables.iter().enumerate() {
        let path = a.out.join(format!("stage{}_{}.csv", k + 1, t.stage.to_lowercase()));
        write_atomic(&path, t.to_csv().as_bytes())?;
        println!("{}:", t.stage);
        for r in &t.rows {
            let score = r.score.map_or_else(|| "failed".to_string(), |v| format!("{v:.4}"));
            let mark = if t.best == Some(r.index) { " *" } else { "" };
            println!("  [{}] {:<40} {}{}", r.index, r.label, score, mark);
        }
    }
    let best_checkpoint = &a.checkpoint[outcome.best.checkpoint];
    write_json(&a.out.join("best_tracker.json"), &outcome.best.tracker)?;
    write_json(
        &a.out.join("sweep.json"),
        &SweepSummary {
            checkpoints: &a.checkpoint,
            sequences: &a.manifest,
            best_checkpoint,
            outcome: &outcome,
        },
    )?;
    println!(
        "best: checkpoint {} lambda {} mean MOTA {}",
        best_checkpoint.display(),
        outcome.best.tracker.lambda,
        outcome.best_score.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let seq = load_sequence(&a.manifest)?;
    let model = load_model(&a.checkpoint)?;
    let annotations = sequence_annotations(&seq, a.annotations.as_deref())?;
    let images = seq.load_images()?;
    let dm = distance_matrix_report(&model, &images[..], &annotations, a.max_samples)?;
    ensure_parent(&a.out)?;
    write_atomic(&a.out, dm.to_csv().as_bytes())?;
    write_atomic(&sibling(&a.out, "json"), dm.to_json().as_bytes())?;
    print!("{}", dm.to_csv());
    if !dm.excluded.is_empty() {
        println!("excluded (fewer than two samples): {:?}", dm.excluded);
    }
    let off = dm.rows_without_low_diagonal();
    if off.is_empty() {
        println!("every diagonal entry is its row minimum");
    } else {
        println!("rows whose diagonal is not the strict minimum: {off:?}");
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    require_file(&a.manifest, "manifest")?;
    let session = seatrack_annotate::Session::open(
        &a.manifest,
        seatrack_annotate::SessionOptions {
            annotations: a.annotations.clone(),
            preassign_gate: a.gate,
        },
    )?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Usage(format!("bad listen address {}:{}: {e}", a.host, a.port)))?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            return Err(Error::Usage(format!("static directory not found: {}", dir.display())));
        }
    }
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Error::Annotate(seatrack_annotate::Error::Server(e)))?;
    println!("serving {} on http://{addr}", session.summary().name);
    runtime.block_on(seatrack_annotate::serve(
        session,
        seatrack_annotate::ServeConfig {
            addr,
            static_dir: a.static_dir,
        },
    ))?;
    Ok(())
}

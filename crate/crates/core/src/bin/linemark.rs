use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linemark::config::{ConfigError, PipelineConfig};
use linemark::eval::{match_and_score, metrics_csv, MatchSpec};
use linemark::geometry::CameraRig;
use linemark::landmark::read_landmarks;
use linemark::pipeline::{self, PipelineError, PipelineParams};
use linemark::simulator::{export_sequence, load_dataset, DatasetError, NoiseSpec};

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_FRAME: u8 = 3;

#[derive(Parser)]
#[command(name = "linemark", version, about = "Line-landmark extraction, filtering and scoring on BEV masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence to a dataset directory.
    Generate(GenerateArgs),
    /// Run the pipeline on a dataset and write landmarks and metrics.
    Run(RunArgs),
    /// Run the pipeline with per-stage timing.
    Bench(BenchArgs),
    /// Score a landmark CSV against a truth CSV.
    Score(ScoreArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config file (TOML). Flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output dataset directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Camera rig file; the built-in surround rig otherwise.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Start from no corruption at all instead of the default noise.
    #[arg(long)]
    zero_noise: bool,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    speckle: Option<usize>,
    #[arg(long)]
    occlusions: Option<usize>,
    #[arg(long)]
    jitter_px: Option<f64>,
    #[arg(long)]
    miss_prob: Option<f64>,
    #[arg(long)]
    fp_rate: Option<f64>,
    /// Fraction of frames with an injected lane/median outlier.
    #[arg(long)]
    outlier_rate: Option<f64>,
}

#[derive(Args)]
struct PipelineFlags {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory written by `generate`.
    #[arg(long, short)]
    dataset: PathBuf,
    /// Report raw per-frame fits instead of filtered landmarks.
    #[arg(long)]
    no_filter: bool,
    /// Replace track states by accepted measurements instead of fusing.
    #[arg(long)]
    gate_only: bool,
    /// Gate threshold on the inconsistency score.
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Inconsistency weights as `l1,l2,l3`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    lambda: Option<Vec<f64>>,
    /// Scan-line spacing, rows.
    #[arg(long)]
    interval: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Also write the timing report here.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Frames on which camera-to-BEV stitching is timed.
    #[arg(long, default_value_t = 20)]
    warp_samples: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Landmark CSV to score.
    #[arg(long, short)]
    predictions: PathBuf,
    /// Truth landmark CSV, same format.
    #[arg(long, short)]
    truth: PathBuf,
    /// Rig file providing the BEV raster spec.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Write metrics.csv here.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(m: impl ToString) -> Self {
        Self { code: EXIT_CONFIG, message: m.to_string() }
    }

    fn data(m: impl ToString) -> Self {
        Self { code: EXIT_DATA, message: m.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Self::data(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Filter(_) => Self::config(e),
            _ => Self::data(e),
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<PipelineConfig, Failure> {
    match &arg.config {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn output_dir(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Failure::config("no output directory: pass --out or set `output` in the config"))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config)?;
    if let Some(t) = &a.template {
        cfg.scene.template = t.parse().map_err(Failure::config)?;
    }
    if let Some(s) = a.seed {
        cfg.scene.seed = s;
    }
    if let Some(f) = a.frames {
        cfg.scene.frames = f;
    }
    if a.rig.is_some() {
        cfg.rig = a.rig.clone();
    }
    if a.zero_noise {
        cfg.noise = NoiseSpec { outlier_rate: cfg.noise.outlier_rate, ..NoiseSpec::zero() };
    }
    let n = &mut cfg.noise;
    a.p_drop.inspect(|v| n.p_drop = *v);
    a.speckle.inspect(|v| n.speckle = *v);
    a.occlusions.inspect(|v| n.occlusions = *v);
    a.jitter_px.inspect(|v| n.jitter_px = *v);
    a.miss_prob.inspect(|v| n.miss_prob = *v);
    a.fp_rate.inspect(|v| n.fp_rate = *v);
    a.outlier_rate.inspect(|v| n.outlier_rate = *v);
    cfg.validate()?;
    let rig = cfg.load_rig()?;
    let out = output_dir(&a.out, &cfg)?;

    let scene = cfg.scene.template.build(cfg.scene.seed, cfg.scene.frames);
    let manifest = export_sequence(&scene, &rig, &cfg.noise, &out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn pipeline_config(f: &PipelineFlags) -> Result<PipelineConfig, Failure> {
    let mut cfg = load_config(&f.config)?;
    if f.no_filter {
        cfg.pipeline.enable_filter = false;
    }
    if f.gate_only {
        cfg.filter.gate_only = true;
    }
    if let Some(s) = f.sigma_max {
        cfg.filter.sigma_max = s;
    }
    if let Some(l) = &f.lambda {
        cfg.filter.lambda = [l[0], l[1], l[2]];
    }
    if let Some(i) = f.interval {
        cfg.linefit.interval = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = pipeline_config(&a.pipeline)?;
    let out = output_dir(&a.out, &cfg)?;
    let ds = load_dataset(&a.pipeline.dataset)?;
    let params = PipelineParams::from(&cfg);
    let result = pipeline::run_dataset(&ds, &params)?;
    let rep = pipeline::report(&ds, &result, &params)?;
    let manifest = pipeline::write_outputs(&out, &ds, &cfg, &result, &rep)?;

    for (kind, m) in &rep.output {
        println!(
            "{kind:<8} fd={:.4} md={:.4} accuracy={:.4} ({} predicted, {} truth)",
            m.fd, m.md, m.accuracy, m.predictions, m.truths
        );
    }
    if rep.outliers.frames > 0 {
        println!(
            "outliers: {} frames, {} of {} measurements rejected",
            rep.outliers.frames, rep.outliers.rejected, rep.outliers.detections
        );
    }
    println!("{}", manifest.display());
    if !result.failures.is_empty() {
        for f in &result.failures {
            eprintln!("frame {}: {}", f.frame, f.message);
        }
        return Err(Failure { code: EXIT_FRAME, message: format!("{} frame(s) failed", result.failures.len()) });
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let cfg = pipeline_config(&a.pipeline)?;
    let ds = load_dataset(&a.pipeline.dataset)?;
    let params = PipelineParams::from(&cfg);
    let rep = pipeline::bench(&ds, &params, a.warp_samples)?;
    println!("{:<8} {:>10} {:>10}", "stage", "mean_ms", "p95_ms");
    for stage in linemark::eval::STAGES {
        let s = &rep.pipeline.stages[stage];
        println!("{stage:<8} {:>10.4} {:>10.4}", s.mean_ms, s.p95_ms);
    }
    let t = &rep.pipeline.total;
    println!("{:<8} {:>10.4} {:>10.4}", "total", t.mean_ms, t.p95_ms);
    println!("camera stitching: {:.4} ms mean over {} frames", rep.camera_warp_mean_ms, rep.camera_warp_samples);
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))?;
        let path = out.join("timing.toml");
        let text = toml::to_string(&rep).map_err(Failure::data)?;
        fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn read_csv(path: &Path, frames: usize) -> Result<Vec<Vec<linemark::landmark::LineLandmark>>, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    read_landmarks(file, frames).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn score(a: ScoreArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let rig = match a.rig.as_ref().or(cfg.rig.as_ref()) {
        Some(p) => CameraRig::load(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        None => CameraRig::default_rig(),
    };
    let spec: MatchSpec = cfg.matching;
    let truth = read_csv(&a.truth, 0)?;
    let preds = read_csv(&a.predictions, truth.len())?;
    let metrics = match_and_score(&preds, &truth, &spec, &rig.bev).map_err(Failure::data)?;
    for (kind, m) in &metrics.kinds {
        println!("{kind:<8} fd={:.4} md={:.4} accuracy={:.4}", m.fd, m.md, m.accuracy);
    }
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))?;
        let path = out.join("metrics.csv");
        fs::write(&path, metrics_csv(&metrics)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

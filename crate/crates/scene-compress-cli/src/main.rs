//! Batch frontend over the compression library: synthesize scenes, score
//! per-point distinctiveness, compress, and re-evaluate recorded selections.
//!
//! Flag validation happens at parse time with messages naming the flag and
//! its legal interval; the same intervals appear in `--help`. Runtime
//! failures print `error: ...` to standard error and exit with code 1.

use std::collections::HashMap;
use std::error::Error;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scene_compress::scene::write_ply_positions;
use scene_compress::{
    compress_with, evaluate, load_compressed_json, load_scene, save_compressed_json, save_scene,
    score_scene, synth_scene, CompressOptions, CompressionParams, PairStrategy, SceneFormat,
    ScoreConfig, ScoreKind,
};

#[derive(Parser)]
#[command(
    name = "scene-compress",
    version,
    about = "Compress SfM scenes into sparse, distinctive, well-spread point subsets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random synthetic scene
    Synth(SynthArgs),
    /// Score per-point visual distinctiveness
    Score(ScoreArgs),
    /// Select a sparse weighted subset of scene points
    Compress(CompressArgs),
    /// Re-evaluate a recorded selection against its source scene
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of points to generate, at least 1
    #[arg(long, value_parser = parse_count_usize)]
    points: usize,
    /// Number of cameras observing the scene, at least 1
    #[arg(long, value_parser = parse_count_u32)]
    cameras: u32,
    /// Cube side length for point positions, in (0, ∞)
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true)]
    extent: f64,
    /// Seed for scene generation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the scene
    #[arg(long)]
    output: PathBuf,
    /// Output format; ply keeps positions only
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Args)]
struct ScoreArgs {
    /// Scene to score; .ply inputs carry positions only
    #[arg(long)]
    input: PathBuf,
    /// Distinctiveness score variant
    #[arg(long, value_enum, default_value_t = ScoreArg::AvgDistance)]
    score: ScoreArg,
    /// Scale for the avg-distance exponential, in (0, ∞); defaults to the
    /// scene's mean pair distance
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Avg-distance share of the combination score, in [0, 1]
    #[arg(long, value_parser = parse_weight, allow_hyphen_values = true, default_value_t = 0.5)]
    weight: f64,
    /// Write scores here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    /// Scene to compress; .ply inputs carry positions only
    #[arg(long)]
    input: PathBuf,
    /// Where to write the selection
    #[arg(long)]
    output: PathBuf,
    /// Output format: json records masses, ply keeps selected positions
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Target kept fraction of points, in (0, 1]
    #[arg(long, value_parser = parse_nu, allow_hyphen_values = true, default_value_t = 0.05)]
    nu: f64,
    /// Weight of the distinctiveness term, in [0, ∞)
    #[arg(long, value_parser = parse_nonnegative, allow_hyphen_values = true, default_value_t = 1.0)]
    tau: f64,
    /// RBF kernel bandwidth in scene units, in (0, ∞)
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true, default_value_t = 1.0)]
    sigma: f64,
    /// Solver pair updates to run, at least 1
    #[arg(long, value_parser = parse_count_u64, default_value_t = 4096)]
    iterations: u64,
    /// Seed for the solver's pair-selection stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distinctiveness score variant
    #[arg(long, value_enum, default_value_t = ScoreArg::AvgDistance)]
    score: ScoreArg,
    /// Scale for the avg-distance exponential, in (0, ∞); defaults to the
    /// scene's mean pair distance
    #[arg(long, value_parser = parse_positive, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Avg-distance share of the combination score, in [0, 1]
    #[arg(long, value_parser = parse_weight, allow_hyphen_values = true, default_value_t = 0.5)]
    weight: f64,
    /// How the solver draws coordinate pairs
    #[arg(long, value_enum, default_value_t = PairStrategyArg::Uniform)]
    pair_strategy: PairStrategyArg,
    /// Keep points whose mass exceeds this fraction of the box cap, in [0, ∞)
    #[arg(long, value_parser = parse_nonnegative, allow_hyphen_values = true, default_value_t = 1e-8)]
    support_threshold: f64,
    /// Kernel row cache budget in MiB, at least 1
    #[arg(long, value_parser = parse_count_usize, default_value_t = 512)]
    kernel_cache_mb: usize,
    /// Log progress every N iterations; 0 disables
    #[arg(long, default_value_t = 0)]
    log_every: u64,
    /// Also write the pre-solve selection as JSON to this path
    #[arg(long)]
    emit_initial: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Source scene the selection was made from
    #[arg(long)]
    input: PathBuf,
    /// Recorded selection (JSON written by compress)
    #[arg(long)]
    compressed: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Ply,
}

impl From<FormatArg> for SceneFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Json => SceneFormat::Json,
            FormatArg::Ply => SceneFormat::Ply,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScoreArg {
    AvgDistance,
    CameraFraction,
    CameraMaxFraction,
    Combination,
}

impl From<ScoreArg> for ScoreKind {
    fn from(value: ScoreArg) -> Self {
        match value {
            ScoreArg::AvgDistance => ScoreKind::AvgDistance,
            ScoreArg::CameraFraction => ScoreKind::CameraFraction,
            ScoreArg::CameraMaxFraction => ScoreKind::CameraMaxFraction,
            ScoreArg::Combination => ScoreKind::Combination,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PairStrategyArg {
    Uniform,
    Active,
}

impl From<PairStrategyArg> for PairStrategy {
    fn from(value: PairStrategyArg) -> Self {
        match value {
            PairStrategyArg::Uniform => PairStrategy::Uniform,
            PairStrategyArg::Active => PairStrategy::Active,
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| String::from("must be a real number"))
}

fn parse_nu(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(String::from("must be in (0, 1]"))
    }
}

fn parse_nonnegative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(String::from("must be in [0, ∞)"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(String::from("must be in (0, ∞)"))
    }
}

fn parse_weight(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(String::from("must be in [0, 1]"))
    }
}

fn parse_count_u64(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(String::from("must be an integer of at least 1")),
    }
}

fn parse_count_u32(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(String::from("must be an integer of at least 1")),
    }
}

fn parse_count_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(String::from("must be an integer of at least 1")),
    }
}

/// Scene files are JSON unless the extension says PLY.
fn scene_format(path: &Path) -> SceneFormat {
    match path.extension() {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => SceneFormat::Ply,
        _ => SceneFormat::Json,
    }
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Info);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), Box<dyn Error>> {
    match command {
        Command::Synth(args) => run_synth(args),
        Command::Score(args) => run_score(args),
        Command::Compress(args) => run_compress(args),
        Command::Eval(args) => run_eval(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<(), Box<dyn Error>> {
    let scene = synth_scene(args.points, args.cameras, args.extent, args.seed);
    save_scene(&scene, &args.output, args.format.into())?;
    println!("wrote {} points to {}", scene.len(), args.output.display());
    Ok(())
}

fn run_score(args: ScoreArgs) -> Result<(), Box<dyn Error>> {
    let scene = load_scene(&args.input, scene_format(&args.input))?;
    let kind = ScoreKind::from(args.score);
    let config = ScoreConfig {
        kind,
        beta: args.beta,
        weight: args.weight,
    };
    let scores = score_scene(&scene, &config)?;
    let payload = serde_json::json!({ "kind": kind.as_str(), "scores": scores.scores });
    let text = serde_json::to_string(&payload)?;
    match &args.output {
        Some(path) => std::fs::write(path, format!("{text}\n"))
            .map_err(|e| format!("{}: {e}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run_compress(args: CompressArgs) -> Result<(), Box<dyn Error>> {
    let scene = load_scene(&args.input, scene_format(&args.input))?;
    let params = CompressionParams {
        nu: args.nu,
        tau: args.tau,
        sigma: args.sigma,
        iterations: args.iterations,
        seed: args.seed,
        pair_strategy: args.pair_strategy.into(),
        score: ScoreConfig {
            kind: args.score.into(),
            beta: args.beta,
            weight: args.weight,
        },
    };
    let options = CompressOptions {
        support_threshold_factor: args.support_threshold,
        cache_bytes: args.kernel_cache_mb.saturating_mul(1024 * 1024),
        log_every: args.log_every,
        emit_initial: args.emit_initial.is_some(),
    };
    let out = compress_with(&scene, &params, &options)?;
    if let Some(path) = &args.emit_initial {
        let initial = out.initial.as_ref().expect("initial snapshot was requested");
        save_compressed_json(path, initial)?;
    }
    match args.format {
        FormatArg::Json => save_compressed_json(&args.output, &out.compressed)?,
        FormatArg::Ply => {
            let position_of: HashMap<u64, [f64; 3]> = scene
                .points()
                .iter()
                .map(|p| (p.id, p.position))
                .collect();
            let positions: Vec<[f64; 3]> = out
                .compressed
                .selected
                .iter()
                .map(|s| position_of[&s.id])
                .collect();
            let context = |e: std::io::Error| format!("{}: {e}", args.output.display());
            let file = File::create(&args.output).map_err(context)?;
            let mut writer = BufWriter::new(file);
            write_ply_positions(&mut writer, &positions).map_err(context)?;
            writer.flush().map_err(context)?;
        }
    }
    println!(
        "selected {} of {} points (objective {:.9})",
        out.compressed.selected.len(),
        scene.len(),
        out.compressed.objective.total,
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), Box<dyn Error>> {
    let scene = load_scene(&args.input, scene_format(&args.input))?;
    let compressed = load_compressed_json(&args.compressed)?;
    if compressed.source_m != scene.len() {
        return Err(format!(
            "selection was made from {} points but {} has {}",
            compressed.source_m,
            args.input.display(),
            scene.len(),
        )
        .into());
    }
    let index_of: HashMap<u64, usize> = scene
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id, i))
        .collect();
    let mut alpha = vec![0.0; scene.len()];
    let mut seen = vec![false; scene.len()];
    for s in &compressed.selected {
        let Some(&i) = index_of.get(&s.id) else {
            return Err(format!(
                "selected id {} does not exist in {}",
                s.id,
                args.input.display(),
            )
            .into());
        };
        if seen[i] {
            return Err(format!("selected id {} appears more than once", s.id).into());
        }
        if !(s.mass >= 0.0 && s.mass.is_finite()) {
            return Err(format!("selected id {} has invalid mass {}", s.id, s.mass).into());
        }
        seen[i] = true;
        alpha[i] = s.mass;
    }
    let scores = score_scene(&scene, &compressed.params.score)?;
    let breakdown = evaluate(
        &alpha,
        &scene,
        &scores,
        compressed.params.tau,
        compressed.params.sigma,
    );
    println!("{}", serde_json::to_string(&breakdown)?);
    Ok(())
}

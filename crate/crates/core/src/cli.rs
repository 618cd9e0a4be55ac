//! Command-line front end: `convert`, `batch`, `evaluate` and `synth`.
//!
//! Sensor models are read from a small TOML file:
//!
//! ```toml
//! model = "pinhole"      # or "spherical"
//! fx = 525.0
//! fy = 525.0
//! cx = 319.5
//! cy = 239.5
//! skew = 0.0             # optional
//! width = 640
//! height = 480
//! depth_scale = 5000.0   # optional, codes per meter of 16-bit PNG depth
//! text_depth = "orthographic"  # optional, or "ray_length" for text depth maps
//!                              # (spherical models always use "ray_length")
//! ```
//!
//! Spherical models use `azimuth_min`, `azimuth_max`, `polar_min`,
//! `polar_max` (radians), `width` and `height` instead of the pinhole keys.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flexion::FlexionMapping;
use crate::geometry::{DepthImage, PinholeIntrinsics, SensorModel, SphericalIntrinsics};
use crate::io::{self, Strictness, TextDepth};
use crate::pipeline::{convert, ConvertOptions, Method, StageTimings, Window};
use crate::synth;
use crate::trajectory::{self, Pose, RpeDelta, Trajectory, DEFAULT_MAX_DT};

#[derive(Debug, Parser)]
#[command(
    name = "depth-flexion",
    version,
    about = "Depth image to Bearing-Angle / Flexion image conversion"
)]
pub struct Cli {
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a single depth image.
    Convert(ConvertArgs),
    /// Convert every frame listed in an association file.
    Batch(BatchArgs),
    /// Score an estimated trajectory against ground truth.
    Evaluate(EvaluateArgs),
    /// Render a synthetic depth sequence with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConversionFlags {
    /// Sensor model configuration file.
    #[arg(long)]
    pub model: PathBuf,

    /// ba:<horizontal|vertical|diagonal|antidiagonal> or flexion:<n|angle|normalized>.
    #[arg(long)]
    pub method: Method,

    /// Median window, `n` or `WxH` (odd sides; 1 disables filtering).
    #[arg(long, default_value = "3")]
    pub filter_window: Window,

    /// Codes per meter of 16-bit PNG depth (overrides the model file).
    #[arg(long)]
    pub depth_scale: Option<f64>,

    /// Output color depth in bits.
    #[arg(long, default_value_t = 8)]
    pub bits: u32,

    /// Map flexion values over [-1, 1] instead of clamping negatives to 0.
    #[arg(long)]
    pub full_range: bool,
}

impl ConversionFlags {
    fn options(&self) -> ConvertOptions {
        ConvertOptions {
            method: self.method,
            window: self.filter_window,
            bits: self.bits,
            mapping: if self.full_range {
                FlexionMapping::FullRange
            } else {
                FlexionMapping::Clamped
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Depth image (16-bit PNG or whitespace-separated text).
    pub input: PathBuf,

    #[command(flatten)]
    pub flags: ConversionFlags,

    /// Output image (.png or .pgm).
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Png,
    Pgm,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::Pgm => "pgm",
        }
    }
}

#[derive(Debug, Args)]
pub struct StrictnessFlags {
    /// Fail on malformed input (default).
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,

    /// Skip malformed lines and report per-frame failures without failing.
    #[arg(long)]
    pub lenient: bool,
}

impl StrictnessFlags {
    fn get(&self) -> Strictness {
        if self.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        }
    }
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Association file listing `timestamp depth [color]` per line.
    pub association: PathBuf,

    #[command(flatten)]
    pub flags: ConversionFlags,

    #[arg(long)]
    pub output_dir: PathBuf,

    #[arg(long, value_enum, default_value = "png")]
    pub format: OutputFormat,

    #[command(flatten)]
    pub strictness: StrictnessFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Ate,
    Rpe,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimated trajectory (TUM format).
    pub estimate: PathBuf,
    /// Ground-truth trajectory (TUM format).
    pub ground_truth: PathBuf,

    #[arg(long, value_enum, default_value = "ate")]
    pub metric: Metric,

    /// Maximum timestamp difference for association, in seconds.
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,

    /// RPE step: frames (`1`) or seconds (`0.5s`).
    #[arg(long, default_value = "1", value_parser = parse_delta)]
    pub delta: RpeDelta,

    #[command(flatten)]
    pub strictness: StrictnessFlags,
}

fn parse_delta(s: &str) -> std::result::Result<RpeDelta, String> {
    if let Some(secs) = s.strip_suffix('s') {
        secs.parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0)
            .map(RpeDelta::Seconds)
            .ok_or_else(|| format!("invalid time delta '{s}'"))
    } else {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .map(RpeDelta::Frames)
            .ok_or_else(|| format!("invalid frame delta '{s}'"))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Sensor model configuration file.
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub output_dir: PathBuf,

    #[arg(long, default_value_t = 1)]
    pub frames: usize,

    /// Frame rate used for timestamps.
    #[arg(long, default_value_t = 30.0)]
    pub rate: f64,

    /// Standard deviation of additive depth noise in meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Codes per meter of the written 16-bit PNG depth (overrides the model file).
    #[arg(long)]
    pub depth_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum ModelSection {
    Pinhole(PinholeIntrinsics),
    Spherical(SphericalIntrinsics),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TextDepthConfig {
    Orthographic,
    RayLength,
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    model: ModelSection,
    depth_scale: Option<f64>,
    text_depth: Option<TextDepthConfig>,
}

/// Parsed sensor configuration file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub model: SensorModel,
    pub depth_scale: f64,
    pub text_depth: TextDepth,
}

impl SensorConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))?;
        let model = match file.model {
            ModelSection::Pinhole(p) => SensorModel::Pinhole(p),
            ModelSection::Spherical(s) => SensorModel::Spherical(s),
        };
        model.validate()?;
        let depth_scale = file.depth_scale.unwrap_or(io::TUM_DEPTH_SCALE);
        if !(depth_scale > 0.0 && depth_scale.is_finite()) {
            return Err(Error::Config(format!(
                "depth_scale must be positive, got {depth_scale}"
            )));
        }
        let text_depth = match (file.text_depth, &model) {
            (Some(TextDepthConfig::Orthographic), SensorModel::Spherical(_)) => {
                return Err(Error::Config(
                    "spherical models take ray-length depth; text_depth must be \"ray_length\""
                        .into(),
                ))
            }
            (Some(TextDepthConfig::Orthographic), _) => TextDepth::Orthographic,
            (Some(TextDepthConfig::RayLength), _) | (None, SensorModel::Spherical(_)) => {
                TextDepth::RayLength
            }
            (None, _) => TextDepth::Orthographic,
        };
        Ok(Self {
            model,
            depth_scale,
            text_depth,
        })
    }

    pub fn load(path: &Path) -> std::result::Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError {
            code: 2,
            message: format!("cannot read model file {}: {e}", path.display()),
        })?;
        Self::parse(&text).map_err(|e| CliError {
            code: 2,
            message: format!("{}: {e}", path.display()),
        })
    }

    /// Loads a depth frame (16-bit PNG, or text otherwise) as this model's kind.
    pub fn read_depth(&self, path: &Path) -> Result<DepthImage> {
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let img = if is_png {
            io::read_depth_png(path, self.depth_scale)?
        } else {
            io::read_depth_text(path, &self.model, self.text_depth)?
        };
        Ok(img.into_kind(self.model.depth_kind()))
    }
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn with_overrides(mut cfg: SensorConfig, depth_scale: Option<f64>) -> SensorConfig {
    if let Some(s) = depth_scale {
        cfg.depth_scale = s;
    }
    cfg
}

fn cmd_convert(args: &ConvertArgs) -> std::result::Result<(), CliError> {
    let cfg = with_overrides(
        SensorConfig::load(&args.flags.model)?,
        args.flags.depth_scale,
    );
    let start = Instant::now();
    let depth = cfg.read_depth(&args.input)?;
    let read = start.elapsed();
    let (img, t) = convert(&depth, &cfg.model, &args.flags.options())?;
    let start = Instant::now();
    io::write_gray(&img, &args.output)?;
    let write = start.elapsed();
    eprintln!(
        "read {:.2} ms, filter {:.2} ms, backproject {:.2} ms, {} {:.2} ms, write {:.2} ms",
        ms(read),
        ms(t.filter),
        ms(t.backproject),
        args.flags.method,
        ms(t.convert),
        ms(write)
    );
    println!("wrote {}", args.output.display());
    Ok(())
}

/// Outcome of a batch run.
#[derive(Debug, Clone, Default)]
pub struct BatchSummary {
    pub converted: usize,
    pub failures: Vec<(PathBuf, String)>,
    pub timings: StageTimings,
}

/// Output file name for a frame timestamp.
pub fn frame_file_name(timestamp: f64, format: OutputFormat) -> String {
    format!("{timestamp:.6}.{}", format.extension())
}

/// Converts every record of an association file into `output_dir`.
pub fn run_batch(
    association: &Path,
    cfg: &SensorConfig,
    opts: &ConvertOptions,
    output_dir: &Path,
    format: OutputFormat,
    strictness: Strictness,
) -> Result<BatchSummary> {
    let records = io::read_association(association, strictness)?;
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let base = association.parent().unwrap_or(Path::new("."));
    let results: Vec<_> = records
        .par_iter()
        .map(|rec| {
            let src = base.join(&rec.depth);
            let out = output_dir.join(frame_file_name(rec.timestamp, format));
            let run = || -> Result<StageTimings> {
                let depth = cfg.read_depth(&src)?;
                let (img, t) = convert(&depth, &cfg.model, opts)?;
                io::write_gray(&img, &out)?;
                Ok(t)
            };
            let res = run();
            (src, res)
        })
        .collect();
    let mut summary = BatchSummary::default();
    for (src, res) in results {
        match res {
            Ok(t) => {
                summary.converted += 1;
                summary.timings.filter += t.filter;
                summary.timings.backproject += t.backproject;
                summary.timings.convert += t.convert;
            }
            Err(e) => summary.failures.push((src, e.to_string())),
        }
    }
    Ok(summary)
}

fn cmd_batch(args: &BatchArgs) -> std::result::Result<(), CliError> {
    let cfg = with_overrides(
        SensorConfig::load(&args.flags.model)?,
        args.flags.depth_scale,
    );
    let strictness = args.strictness.get();
    let start = Instant::now();
    let summary = run_batch(
        &args.association,
        &cfg,
        &args.flags.options(),
        &args.output_dir,
        args.format,
        strictness,
    )?;
    for (src, msg) in &summary.failures {
        eprintln!("failed: {}: {msg}", src.display());
    }
    println!(
        "converted={} failed={} total_ms={:.1} filter_ms={:.1} backproject_ms={:.1} convert_ms={:.1}",
        summary.converted,
        summary.failures.len(),
        ms(start.elapsed()),
        ms(summary.timings.filter),
        ms(summary.timings.backproject),
        ms(summary.timings.convert),
    );
    if !summary.failures.is_empty() && strictness == Strictness::Strict {
        return Err(CliError {
            code: 1,
            message: format!("{} frame(s) failed", summary.failures.len()),
        });
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> std::result::Result<(), CliError> {
    let strictness = args.strictness.get();
    let est = io::read_tum_trajectory(&args.estimate, strictness)?;
    let gt = io::read_tum_trajectory(&args.ground_truth, strictness)?;
    match args.metric {
        Metric::Ate => {
            let r = trajectory::ate(&est, &gt, args.max_dt)?;
            let s = r.stats;
            println!("ATE RMSE {:.6} m over {} associated poses", s.rmse, s.count);
            println!(
                "metric=ate rmse={} mean={} median={} std={} min={} max={} pairs={}",
                s.rmse, s.mean, s.median, s.std, s.min, s.max, s.count
            );
        }
        Metric::Rpe => {
            let r = trajectory::rpe(&est, &gt, args.delta, args.max_dt)?;
            let s = r.stats;
            println!(
                "RPE mean translational error {:.6} m over {} steps",
                s.mean, s.count
            );
            println!(
                "metric=rpe mean={} rmse={} median={} std={} min={} max={} steps={}",
                s.mean, s.rmse, s.median, s.std, s.min, s.max, s.count
            );
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> std::result::Result<(), CliError> {
    let cfg = with_overrides(SensorConfig::load(&args.model)?, args.depth_scale);
    if args.frames == 0 || !(args.rate > 0.0) {
        return Err(Error::Config("need at least one frame and a positive rate".into()).into());
    }
    let depth_dir = args.output_dir.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;
    let scene = synth::room_scene();
    let mount = match cfg.model {
        SensorModel::Pinhole(_) => nalgebra::Isometry3::identity(),
        SensorModel::Spherical(_) => synth::spherical_mount(),
    };
    let frames: Vec<(f64, nalgebra::Isometry3<f64>)> = (0..args.frames)
        .map(|k| {
            (
                1.0 + k as f64 / args.rate,
                synth::walkthrough_pose(k, args.frames),
            )
        })
        .collect();
    // frames render in parallel, each with its own noise seed
    let rendered: Vec<Result<String>> = frames
        .par_iter()
        .enumerate()
        .map(|(k, (ts, pose))| {
            let mut depth = scene.render_from(&cfg.model, &(pose * mount))?;
            if args.noise > 0.0 {
                depth = synth::add_gaussian_noise(
                    &depth,
                    args.noise,
                    args.seed.wrapping_add(k as u64),
                )?;
            }
            let rel = format!("depth/{ts:.6}.png");
            io::write_depth_png(&depth, args.output_dir.join(&rel), cfg.depth_scale)?;
            Ok(format!("{ts:.6} {rel}"))
        })
        .collect();
    let mut assoc = String::from("# timestamp depth\n");
    for line in rendered {
        assoc.push_str(&line?);
        assoc.push('\n');
    }
    let assoc_path = args.output_dir.join("associations.txt");
    fs::write(&assoc_path, assoc).map_err(|e| Error::io(&assoc_path, e))?;
    let poses = frames
        .iter()
        .map(|(ts, pose)| Pose::from_isometry(*ts, pose))
        .collect();
    let gt = Trajectory::new(poses)?;
    io::write_tum_trajectory(&gt, args.output_dir.join("groundtruth.txt"))?;
    println!(
        "frames={} output={}",
        args.frames,
        args.output_dir.display()
    );
    Ok(())
}

pub fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError {
            code: 2,
            message: format!("cannot start thread pool: {e}"),
        })?;
    pool.install(|| match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
    })
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinhole_config() {
        let cfg = SensorConfig::parse(
            "model = \"pinhole\"\nfx = 525.0\nfy = 525.0\ncx = 319.5\ncy = 239.5\nwidth = 640\nheight = 480\n",
        )
        .unwrap();
        assert_eq!(cfg.depth_scale, 5000.0);
        assert!(matches!(cfg.model, SensorModel::Pinhole(p) if p.skew == 0.0 && p.width == 640));
    }

    #[test]
    fn spherical_config() {
        let cfg = SensorConfig::parse(
            "model = \"spherical\"\nazimuth_min = 0.0\nazimuth_max = 6.283185307179586\n\
             polar_min = 0.0\npolar_max = 3.141592653589793\nwidth = 1024\nheight = 512\n\
             depth_scale = 1000.0\ntext_depth = \"ray_length\"\n",
        )
        .unwrap();
        assert_eq!(cfg.depth_scale, 1000.0);
        assert_eq!(cfg.text_depth, TextDepth::RayLength);
        assert!(matches!(cfg.model, SensorModel::Spherical(_)));

        let sphere = "model = \"spherical\"\nazimuth_min = 0.0\nazimuth_max = 3.0\n\
                      polar_min = 0.5\npolar_max = 2.5\nwidth = 30\nheight = 20\n";
        let cfg = SensorConfig::parse(sphere).unwrap();
        assert_eq!(cfg.text_depth, TextDepth::RayLength);
        let forced = format!("{sphere}text_depth = \"orthographic\"\n");
        assert!(SensorConfig::parse(&forced).is_err());
    }

    #[test]
    fn bad_configs() {
        assert!(SensorConfig::parse("model = \"fisheye\"\n").is_err());
        assert!(SensorConfig::parse(
            "model = \"pinhole\"\nfx = -1.0\nfy = 1.0\ncx = 0.0\ncy = 0.0\nwidth = 4\nheight = 4\n"
        )
        .is_err());
    }

    #[test]
    fn delta_parsing() {
        assert_eq!(parse_delta("1").unwrap(), RpeDelta::Frames(1));
        assert_eq!(parse_delta("0.5s").unwrap(), RpeDelta::Seconds(0.5));
        assert!(parse_delta("0").is_err());
        assert!(parse_delta("xs").is_err());
    }

    #[test]
    fn frame_names_carry_timestamps() {
        assert_eq!(
            frame_file_name(1305031102.175304, OutputFormat::Png),
            "1305031102.175304.png"
        );
    }
}

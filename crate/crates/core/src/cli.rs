//! Command-line interface. `main.rs` only parses arguments and maps the
//! outcome to an exit code; everything else lives here so it can be tested.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bench::{run_bench, BenchReport, Workload, MIN_BURN_IN, MIN_PASSES};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Pose2D};
use crate::io;
use crate::matcher::{MatchConfig, Matcher};
use crate::odometry::{integrate, kitti_drift, DriftOptions, Trajectory};
use crate::synth::{make_trajectory, MotionModel, Scene};
use crate::verify::{self, Suite, VerifyOptions};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "FSCAN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "fscan",
    version,
    about = "Decoupled Fourier scan matching for 2D power grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the pose between two scans; prints `theta,tx,ty`.
    Match(MatchArgs),
    /// Render a synthetic trajectory of scans with ground truth.
    Synth(SynthArgs),
    /// Match consecutive scans, integrate, and score against ground truth.
    Odometry(OdometryArgs),
    /// Time the matcher or the brute-force oracle; prints CSV.
    Bench(BenchArgs),
    /// Run the numerical property suites.
    Verify(VerifyArgs),
    /// Convert a 16-bit grayscale PNG into a scan file.
    ImportPng(ImportPngArgs),
    /// Write the default matcher configuration.
    InitConfig(InitConfigArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    pub scan_a: PathBuf,
    pub scan_b: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "mask_b")]
    pub mask_a: Option<PathBuf>,
    #[arg(long, requires = "mask_a")]
    pub mask_b: Option<PathBuf>,
    /// Directory receiving `theta_surface.csv` and `xy_surface.csv`.
    #[arg(long)]
    pub dump_surfaces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for scans, `gt.csv` and `scene.toml`.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene description; a random scene covering the trajectory otherwise.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Seed for the random scene and the motion jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub count: usize,
    /// Grid size and cell size are taken from this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub motion: MotionArgs,
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    /// Metres per frame along the sensor's x axis.
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub forward: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lateral: f64,
    /// Radians per frame.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yaw_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub jitter_translation: f64,
    #[arg(long, default_value_t = 0.02)]
    pub jitter_rotation: f64,
}

#[derive(Debug, Args)]
pub struct OdometryArgs {
    /// Directory of `.fscn` scans, processed in file-name order.
    pub scans: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth trajectory CSV; enables the drift report.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory for `trajectory.csv`, `drift.txt` and `drift.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Start a drift segment at every n-th frame.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "matcher")]
    pub workload: Workload,
    #[arg(long, default_value_t = MIN_PASSES)]
    pub passes: usize,
    #[arg(long, default_value_t = MIN_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the config's grid size.
    #[arg(long)]
    pub n_xy: Option<usize>,
    /// Overrides the config's rotation bin count (δθ = π / n_theta).
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Omit the CSV header line.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ImportPngArgs {
    pub png: PathBuf,
    pub out: PathBuf,
    /// Metres per pixel.
    #[arg(long)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct InitConfigArgs {
    pub out: PathBuf,
}

/// Caps the global rayon pool from `FSCAN_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    // Fails only if a pool already exists, in which case it is kept.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<MatchConfig> {
    match path {
        Some(p) => io::read_config(p),
        None => Ok(MatchConfig::default()),
    }
}

/// Outcome of a command that can fail a check without erroring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    ChecksFailed,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Status> {
    match cli.command {
        Command::Match(args) => cmd_match(&args, out),
        Command::Synth(args) => cmd_synth(&args, out),
        Command::Odometry(args) => cmd_odometry(&args, out),
        Command::Bench(args) => cmd_bench(&args, out),
        Command::Verify(args) => cmd_verify(&args, out),
        Command::ImportPng(args) => {
            let scan = io::import_png(&args.png, args.delta)?;
            io::write_scan(&args.out, &scan)?;
            Ok(Status::Success)
        }
        Command::InitConfig(args) => {
            io::write_config(&args.out, &MatchConfig::default())?;
            Ok(Status::Success)
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_match(args: &MatchArgs, out: &mut dyn Write) -> Result<Status> {
    let cfg = load_config(args.config.as_deref())?;
    let f = io::read_scan(&args.scan_a)?;
    let g = io::read_scan(&args.scan_b)?;
    let masks = match (&args.mask_a, &args.mask_b) {
        (Some(a), Some(b)) => Some((io::read_mask(a)?, io::read_mask(b)?)),
        _ => None,
    };
    let matcher = Matcher::new(cfg)?;
    let result = matcher.scan_match(&f, &g, masks.as_ref().map(|(a, b)| (a, b)))?;
    if let Some(dir) = &args.dump_surfaces {
        io::create_dir(dir)?;
        io::emit(
            Some(&dir.join("theta_surface.csv")),
            &io::surface_csv(&result.theta_surface),
        )?;
        io::emit(
            Some(&dir.join("xy_surface.csv")),
            &io::surface_csv(&result.xy_surface),
        )?;
    }
    write_out(out, &format!("{}\n", result.pose))?;
    Ok(Status::Success)
}

/// File name of scan `i` inside a synth output directory.
pub fn scan_file_name(i: usize) -> String {
    format!("scan_{i:04}.{}", io::SCAN_EXTENSION)
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<Status> {
    if args.count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    let cfg = load_config(args.config.as_deref())?;
    let spec = GridSpec::new(cfg.n_xy, cfg.delta_xy)?;
    let motion = MotionModel {
        forward: args.motion.forward,
        lateral: args.motion.lateral,
        yaw_rate: args.motion.yaw_rate,
        jitter_translation: args.motion.jitter_translation,
        jitter_rotation: args.motion.jitter_rotation,
        seed: args.seed,
    };
    let scene = match &args.scene {
        Some(path) => io::read_scene(path)?,
        None => Scene::random_covering(args.seed, spec, &motion.poses(args.count)?),
    };
    let seq = make_trajectory(&scene, &motion, args.count, spec)?;
    io::create_dir(&args.out)?;
    for (i, scan) in seq.scans.iter().enumerate() {
        io::write_scan(&args.out.join(scan_file_name(i)), scan)?;
    }
    io::write_trajectory(&args.out.join("gt.csv"), &seq.poses)?;
    io::write_scene(&args.out.join("scene.toml"), &scene)?;
    write_out(
        out,
        &format!(
            "wrote {} scan(s) to {}\n",
            seq.scans.len(),
            args.out.display()
        ),
    )?;
    Ok(Status::Success)
}

/// Relative sensor motion between consecutive scans. The matcher reports
/// the transform taking frame-`k` coordinates into frame `k+1`, which is
/// the inverse of the motion.
pub fn match_sequence(matcher: &Matcher, scans: &[PathBuf]) -> Result<Vec<Pose2D>> {
    if scans.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "odometry needs at least 2 scans, found {}",
            scans.len()
        )));
    }
    scans
        .par_windows(2)
        .map(|pair| {
            let f = io::read_scan(&pair[0])?;
            let g = io::read_scan(&pair[1])?;
            Ok(matcher.scan_match(&f, &g, None)?.pose.inverse())
        })
        .collect()
}

pub fn cmd_odometry(args: &OdometryArgs, out: &mut dyn Write) -> Result<Status> {
    let cfg = load_config(args.config.as_deref())?;
    let scans = io::list_scans(&args.scans)?;
    let matcher = Matcher::new(cfg)?;
    let relatives = match_sequence(&matcher, &scans)?;
    let estimate = integrate(&relatives);
    io::create_dir(&args.out)?;
    io::write_trajectory(&args.out.join("trajectory.csv"), estimate.poses())?;
    write_out(out, &format!("matched {} scans\n", scans.len()))?;

    let Some(gt_path) = &args.gt else {
        return Ok(Status::Success);
    };
    let truth = Trajectory::new(io::read_trajectory(gt_path)?);
    if truth.len() != estimate.len() {
        return Err(Error::InvalidInput(format!(
            "ground truth has {} poses for {} scans",
            truth.len(),
            estimate.len()
        )));
    }
    let opts = DriftOptions {
        stride: args.stride,
        ..DriftOptions::default()
    };
    match kitti_drift(&estimate, &truth, &opts)? {
        Some(report) => {
            io::emit(Some(&args.out.join("drift.txt")), &report.to_text())?;
            io::emit(Some(&args.out.join("drift.csv")), &report.to_csv())?;
            write_out(out, &report.to_text())?;
        }
        None => write_out(
            out,
            "trajectory shorter than the shortest segment; no drift computed\n",
        )?,
    }
    Ok(Status::Success)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<Status> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.n_xy.is_some() || args.n_theta.is_some() {
        let n_xy = args.n_xy.unwrap_or(cfg.n_xy);
        let n_theta = args.n_theta.unwrap_or(cfg.n_theta);
        cfg = MatchConfig {
            n_xy,
            n_theta,
            delta_theta: std::f64::consts::PI / n_theta as f64,
            ..cfg
        };
        cfg.validate()?;
    }
    let report = run_bench(args.workload, &cfg, args.passes, args.burn_in, args.seed)?;
    let mut text = String::new();
    if !args.no_header {
        text.push_str(BenchReport::CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&report.to_csv_row());
    text.push('\n');
    write_out(out, &text)?;
    Ok(Status::Success)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<Status> {
    let opts = VerifyOptions {
        seed: args.seed,
        ..VerifyOptions::default()
    };
    let report = verify::run(args.suite, &opts)?;
    write_out(out, &report.to_text())?;
    Ok(if report.passed() {
        Status::Success
    } else {
        Status::ChecksFailed
    })
}

//! Wall-clock timing harness.
//!
//! Each workload runs `burn_in` untimed passes, then `passes` timed passes on
//! noise-populated inputs (one scan pair, regenerated from the seed). Reports
//! carry mean throughput alongside median and p95 latency because wall time
//! on shared machines is heavy-tailed.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::imageops::ScanGrid;
use crate::matcher::{MatchConfig, Matcher};
use crate::oracle::{brute_force_match, brute_force_match_par};

pub const MIN_PASSES: usize = 100;
pub const MIN_BURN_IN: usize = 10;

/// Runs `work` `burn_in + passes` times and returns the timed durations.
pub fn measure<F: FnMut()>(passes: usize, burn_in: usize, mut work: F) -> Vec<Duration> {
    for _ in 0..burn_in {
        work();
    }
    (0..passes)
        .map(|_| {
            let start = Instant::now();
            work();
            start.elapsed()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub total: Duration,
    pub mean: Duration,
    pub median: Duration,
    pub p95: Duration,
}

/// Nearest-rank statistics. Panics on an empty slice.
pub fn summarize(times: &[Duration]) -> Summary {
    assert!(!times.is_empty(), "no timings to summarize");
    let mut sorted = times.to_vec();
    sorted.sort();
    let total: Duration = sorted.iter().sum();
    let rank = |q: f64| {
        let idx = (q * sorted.len() as f64).ceil() as usize;
        sorted[idx.clamp(1, sorted.len()) - 1]
    };
    Summary {
        total,
        mean: total / sorted.len() as u32,
        median: rank(0.5),
        p95: rank(0.95),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    /// Empty closure; measures harness overhead only.
    Noop,
    Matcher,
    Oracle,
    /// Oracle with rotation candidates spread over the rayon pool.
    OracleParallel,
}

impl Workload {
    pub fn label(&self) -> &'static str {
        match self {
            Workload::Noop => "noop",
            Workload::Matcher => "matcher",
            Workload::Oracle => "oracle",
            Workload::OracleParallel => "oracle_parallel",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noop" => Ok(Workload::Noop),
            "matcher" => Ok(Workload::Matcher),
            "oracle" => Ok(Workload::Oracle),
            "oracle_parallel" => Ok(Workload::OracleParallel),
            other => Err(Error::Config(format!("unknown workload {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub workload: Workload,
    pub n_xy: usize,
    pub n_theta: usize,
    pub passes: usize,
    pub mean_hz: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub host: String,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "workload,n_xy,n_theta,passes,mean_hz,median_ms,p95_ms,host";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.6},{:.6},{}",
            self.workload,
            self.n_xy,
            self.n_theta,
            self.passes,
            self.mean_hz,
            self.median_ms,
            self.p95_ms,
            self.host.replace(',', ";")
        )
    }

    fn from_times(workload: Workload, cfg: &MatchConfig, times: &[Duration]) -> Self {
        let s = summarize(times);
        BenchReport {
            workload,
            n_xy: cfg.n_xy,
            n_theta: cfg.n_theta,
            passes: times.len(),
            mean_hz: times.len() as f64 / s.total.as_secs_f64(),
            median_ms: s.median.as_secs_f64() * 1e3,
            p95_ms: s.p95.as_secs_f64() * 1e3,
            host: host_descriptor(),
        }
    }
}

/// `arch-os, N threads, CPU model` where available.
pub fn host_descriptor() -> String {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{}-{} {} threads {}",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads,
        model
    )
}

/// A uniform-noise scan pair on the config's grid.
pub fn noise_pair(cfg: &MatchConfig, seed: u64) -> Result<(ScanGrid, ScanGrid)> {
    let spec = GridSpec::new(cfg.n_xy, cfg.delta_xy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_xy;
    let f = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
    let g = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
    Ok((ScanGrid::new(spec, f)?, ScanGrid::new(spec, g)?))
}

pub fn run_bench(
    workload: Workload,
    cfg: &MatchConfig,
    passes: usize,
    burn_in: usize,
    seed: u64,
) -> Result<BenchReport> {
    if passes < MIN_PASSES {
        return Err(Error::Config(format!(
            "need at least {MIN_PASSES} passes, got {passes}"
        )));
    }
    if burn_in < MIN_BURN_IN {
        return Err(Error::Config(format!(
            "need at least {MIN_BURN_IN} burn-in passes, got {burn_in}"
        )));
    }
    cfg.validate()?;
    let (f, g) = noise_pair(cfg, seed)?;
    let thetas = cfg.theta_grid();
    let times = match workload {
        Workload::Noop => measure(passes, burn_in, || {
            std::hint::black_box(());
        }),
        Workload::Matcher => {
            let matcher = Matcher::new(cfg.clone())?;
            measure(passes, burn_in, || {
                std::hint::black_box(matcher.scan_match(&f, &g, None).expect("inputs validated"));
            })
        }
        Workload::Oracle => measure(passes, burn_in, || {
            std::hint::black_box(
                brute_force_match(&f, &g, &thetas, cfg).expect("inputs validated"),
            );
        }),
        Workload::OracleParallel => measure(passes, burn_in, || {
            std::hint::black_box(
                brute_force_match_par(&f, &g, &thetas, cfg).expect("inputs validated"),
            );
        }),
    };
    Ok(BenchReport::from_times(workload, cfg, &times))
}

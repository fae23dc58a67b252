//! Brute-force correlative scan matching over every (rotation, translation)
//! candidate. Serves as correctness reference and speed baseline for the
//! decoupled matcher.
//!
//! For each rotation candidate `g` is rotated back and the full translation
//! correlation surface is computed with zero-padded FFTs; the global hard
//! argmax wins. Poses follow the matcher's convention (`f(x) ≈ g(R x + t)`).

use std::time::Duration;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::bench::{measure, summarize};
use crate::error::{Error, Result};
use crate::geometry::{rotate_vec, Pose2D};
use crate::imageops::{rotate_array, zero_pad_array, ScanGrid};
use crate::matcher::{MatchConfig, Matcher};
use crate::spectral::{forward_transform, xcorr_prepared, CorrelationKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMatch {
    pub pose: Pose2D,
    /// Raw correlation score at the returned pose.
    pub score: f64,
    /// Index into the rotation candidate list.
    pub theta_index: usize,
}

struct Prepared {
    transform: Vec<Complex64>,
    n_pad: usize,
    delta: f64,
}

fn prepare(f: &ScanGrid, g: &ScanGrid, thetas: &[f64], cfg: &MatchConfig) -> Result<Prepared> {
    if thetas.is_empty() {
        return Err(Error::InvalidInput(
            "brute-force search needs at least one rotation candidate".into(),
        ));
    }
    if f.spec() != g.spec() {
        return Err(Error::Shape(format!(
            "scan grids differ: {:?} vs {:?}",
            f.spec(),
            g.spec()
        )));
    }
    if f.spec().n() != cfg.n_xy {
        return Err(Error::Shape(format!(
            "scan has {} cells per side, config expects {}",
            f.spec().n(),
            cfg.n_xy
        )));
    }
    let n_pad = cfg.padded_len();
    let fp = zero_pad_array(f.values(), n_pad)?;
    Ok(Prepared {
        transform: forward_transform(&fp),
        n_pad,
        delta: cfg.delta_xy,
    })
}

/// Best `(row-major index, score)` of the translation surface at one rotation.
fn best_at(prep: &Prepared, g: &ScanGrid, theta: f64) -> Result<(usize, f64)> {
    let g_rot = rotate_array(g.values(), -theta);
    let gp = zero_pad_array(&g_rot, prep.n_pad)?;
    let c = xcorr_prepared(&prep.transform, &gp, CorrelationKernel::Correlation)?;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in c.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

fn to_match(
    prep: &Prepared,
    thetas: &[f64],
    theta_index: usize,
    index: usize,
    score: f64,
) -> OracleMatch {
    let mid = (prep.n_pad / 2) as f64;
    let row_lag = (index / prep.n_pad) as f64 - mid;
    let col_lag = (index % prep.n_pad) as f64 - mid;
    let theta = thetas[theta_index];
    let [tx, ty] = rotate_vec(theta, [col_lag * prep.delta, -row_lag * prep.delta]);
    OracleMatch {
        pose: Pose2D::new(theta, tx, ty),
        score,
        theta_index,
    }
}

/// Exhaustive search; earlier rotation candidates win exact ties.
pub fn brute_force_match(
    f: &ScanGrid,
    g: &ScanGrid,
    thetas: &[f64],
    cfg: &MatchConfig,
) -> Result<OracleMatch> {
    let prep = prepare(f, g, thetas, cfg)?;
    let mut best: Option<(usize, usize, f64)> = None;
    for (k, &theta) in thetas.iter().enumerate() {
        let (index, score) = best_at(&prep, g, theta)?;
        if best.is_none_or(|b| score > b.2) {
            best = Some((k, index, score));
        }
    }
    let (k, index, score) = best.expect("at least one candidate");
    Ok(to_match(&prep, thetas, k, index, score))
}

/// Same result as [`brute_force_match`], with rotation candidates evaluated
/// on the rayon pool. The reduction runs in candidate order.
pub fn brute_force_match_par(
    f: &ScanGrid,
    g: &ScanGrid,
    thetas: &[f64],
    cfg: &MatchConfig,
) -> Result<OracleMatch> {
    let prep = prepare(f, g, thetas, cfg)?;
    let per_theta: Vec<(usize, f64)> = thetas
        .par_iter()
        .map(|&theta| best_at(&prep, g, theta))
        .collect::<Result<_>>()?;
    let mut best = (0, per_theta[0].0, per_theta[0].1);
    for (k, &(index, score)) in per_theta.iter().enumerate().skip(1) {
        if score > best.2 {
            best = (k, index, score);
        }
    }
    Ok(to_match(&prep, thetas, best.0, best.1, best.2))
}

/// Burn-in passes discarded before timing.
pub const COMPARISON_BURN_IN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingComparison {
    pub matcher_median: Duration,
    pub oracle_median: Duration,
}

impl TimingComparison {
    /// How many times faster the decoupled matcher is.
    pub fn speedup(&self) -> f64 {
        self.oracle_median.as_secs_f64() / self.matcher_median.as_secs_f64()
    }
}

/// Median wall time per match of the matcher and the oracle (searching the
/// matcher's own rotation grid) on the same inputs.
pub fn timing_comparison(
    f: &ScanGrid,
    g: &ScanGrid,
    cfg: &MatchConfig,
    repeats: usize,
) -> Result<TimingComparison> {
    timing_comparison_with(f, g, cfg, &cfg.theta_grid(), repeats)
}

/// As [`timing_comparison`] with an explicit oracle rotation list.
pub fn timing_comparison_with(
    f: &ScanGrid,
    g: &ScanGrid,
    cfg: &MatchConfig,
    oracle_thetas: &[f64],
    repeats: usize,
) -> Result<TimingComparison> {
    if repeats < 10 {
        return Err(Error::Config(format!(
            "timing needs at least 10 repeats, got {repeats}"
        )));
    }
    let matcher = Matcher::new(cfg.clone())?;
    // Fail before timing rather than inside the loop.
    matcher.scan_match(f, g, None)?;
    brute_force_match(f, g, oracle_thetas, cfg)?;

    let matcher_times = measure(repeats, COMPARISON_BURN_IN, || {
        std::hint::black_box(matcher.scan_match(f, g, None).expect("validated above"));
    });
    let oracle_times = measure(repeats, COMPARISON_BURN_IN, || {
        std::hint::black_box(brute_force_match(f, g, oracle_thetas, cfg).expect("validated above"));
    });
    Ok(TimingComparison {
        matcher_median: summarize(&matcher_times).median,
        oracle_median: summarize(&oracle_times).median,
    })
}

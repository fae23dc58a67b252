//! Runnable numerical property suites behind `fscan verify`.
//!
//! The Fourier suite checks the transform identities the rotation stage
//! relies on. The oracle suite checks correlation semantics and that the
//! decoupled matcher lands where the exhaustive search does.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Pose2D};
use crate::imageops::{circular_shift, rot90, rotate_array, ScanGrid};
use crate::matcher::{MatchConfig, Matcher};
use crate::oracle::brute_force_match;
use crate::spectral::{dft2, fftshift, magnitude, xcorr_with, CorrelationKernel};
use crate::synth::{make_pair, random_relative, render, NoiseModel, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fourier,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(Suite::Fourier),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            "" => Err(Error::InvalidInput("empty suite name".into())),
            other => Err(Error::InvalidInput(format!(
                "unknown suite {other:?}, expected fourier, oracle or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Kernel handed to the matcher. Anything but correlation is a
    /// deliberately broken build used to prove the suite can fail.
    #[doc(hidden)]
    pub kernel: CorrelationKernel,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            kernel: CorrelationKernel::Correlation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "{} checks, {} failed\n",
            self.checks.len(),
            failed
        ));
        out
    }
}

fn check(suite: &'static str, name: &'static str, value: f64, tol: f64, what: &str) -> Check {
    Check {
        suite,
        name,
        passed: value.is_finite() && value <= tol,
        detail: format!("{what} {value:.3e} (tolerance {tol:.0e})"),
    }
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    if matches!(suite, Suite::Fourier | Suite::All) {
        report.checks.extend(fourier_checks(opts.seed)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        report.checks.extend(oracle_checks(opts)?);
    }
    Ok(report)
}

fn random_array(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

/// Direct O(n⁴) evaluation of the unnormalised forward DFT.
pub fn naive_dft2(a: &Array2<f64>) -> Array2<Complex64> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows, cols), |(u, v)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((r, c), &x) in a.indexed_iter() {
            let phase = -2.0 * PI * ((u * r) as f64 / rows as f64 + (v * c) as f64 / cols as f64);
            acc += Complex64::from_polar(x, phase);
        }
        acc
    })
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn fourier_checks(seed: u64) -> Result<Vec<Check>> {
    const SUITE: &str = "fourier";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let g = random_array(64, 64, &mut rng);
    let mag = magnitude(&dft2(&g)?);
    let mut worst: f64 = 0.0;
    for (dr, dc) in [(5, -11), (0, 1), (-32, 17), (63, 63)] {
        let shifted = magnitude(&dft2(&circular_shift(&g, dr, dc))?);
        worst = worst.max(max_abs_diff(&mag, &shifted) / max_abs(&mag));
    }
    checks.push(check(
        SUITE,
        "shift-invariance",
        worst,
        1e-9,
        "max relative magnitude change",
    ));

    let small = random_array(8, 8, &mut rng);
    let fast = dft2(&small)?;
    let direct = fftshift(&naive_dft2(&small));
    let err = fast
        .values()
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    checks.push(check(
        SUITE,
        "dft-vs-direct-8x8",
        err,
        1e-10,
        "max abs difference",
    ));

    let g = random_array(48, 40, &mut rng);
    let energy: f64 = g.iter().map(|x| x * x).sum();
    let spectral: f64 = dft2(&g)?.values().iter().map(|z| z.norm_sqr()).sum();
    let n = g.len() as f64;
    let rel = (spectral - n * energy).abs() / (n * energy);
    checks.push(check(
        SUITE,
        "parseval",
        rel,
        1e-6,
        "relative energy mismatch",
    ));

    let g = random_array(31, 31, &mut rng);
    let lhs = magnitude(&dft2(&rot90(&g))?);
    let rhs = rot90(&magnitude(&dft2(&g)?));
    let rel = max_abs_diff(&lhs, &rhs) / max_abs(&rhs);
    checks.push(check(
        SUITE,
        "rot90-covariance",
        rel,
        1e-9,
        "max relative difference",
    ));

    Ok(checks)
}

fn circular_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = a.dim();
    // Centred lags, matching the layout returned by xcorr.
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let kr = i as isize - (rows / 2) as isize;
        let kc = j as isize - (cols / 2) as isize;
        let mut acc = 0.0;
        for ((r, c), &x) in a.indexed_iter() {
            let rr = (r as isize + kr).rem_euclid(rows as isize) as usize;
            let cc = (c as isize + kc).rem_euclid(cols as isize) as usize;
            acc += x * b[[rr, cc]];
        }
        acc
    })
}

/// Best linear correlation score over every rotation in `thetas` and every
/// integer lag, evaluated directly in the spatial domain. O(n⁴·n_θ).
pub fn spatial_best_score(f: &ScanGrid, g: &ScanGrid, thetas: &[f64]) -> f64 {
    let n = f.spec().n() as isize;
    let fv = f.values();
    let mut best = f64::NEG_INFINITY;
    for &theta in thetas {
        let gr = rotate_array(g.values(), -theta);
        for dr in -(n - 1)..n {
            for dc in -(n - 1)..n {
                let mut acc = 0.0;
                for r in 0.max(-dr)..n.min(n - dr) {
                    for c in 0.max(-dc)..n.min(n - dc) {
                        acc += fv[[r as usize, c as usize]]
                            * gr[[(r + dr) as usize, (c + dc) as usize]];
                    }
                }
                best = best.max(acc);
            }
        }
    }
    best
}

/// Rotation and per-axis translation differences, in bins and cells.
pub fn pose_gap(a: &Pose2D, b: &Pose2D, cfg: &MatchConfig) -> (f64, f64) {
    let dtheta = crate::geometry::normalize_angle(a.theta - b.theta).abs() / cfg.delta_theta;
    let dt = (a.tx - b.tx).abs().max((a.ty - b.ty).abs()) / cfg.delta_xy;
    (dtheta, dt)
}

pub fn oracle_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    const SUITE: &str = "oracle";
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut checks = Vec::new();

    let a = random_array(6, 6, &mut rng);
    let b = random_array(6, 6, &mut rng);
    let err = max_abs_diff(
        &xcorr_with(&a, &b, opts.kernel)?,
        &circular_correlation(&a, &b),
    );
    checks.push(check(
        SUITE,
        "xcorr-vs-direct-6x6",
        err,
        1e-9,
        "max abs difference",
    ));

    let spec = GridSpec::new(15, 0.4)?;
    let f = ScanGrid::new(spec, random_array(15, 15, &mut rng))?;
    let g = ScanGrid::new(spec, random_array(15, 15, &mut rng))?;
    let cfg = MatchConfig::with_resolution(15, 5);
    let thetas = cfg.theta_grid();
    let fast = brute_force_match(&f, &g, &thetas, &cfg)?.score;
    let direct = spatial_best_score(&f, &g, &thetas);
    checks.push(check(
        SUITE,
        "oracle-vs-spatial-loop",
        (fast - direct).abs() / direct.abs(),
        1e-6,
        "relative score difference",
    ));

    // Pure integer shift of a noiseless scene: (5, -3) cells.
    let cfg = MatchConfig::with_resolution(127, 128);
    let spec = cfg.grid_spec()?;
    let matcher = Matcher::new(cfg.clone())?.with_kernel(opts.kernel);
    let scene = Scene::random(opts.seed, spec).with_noise(NoiseModel::silent());
    let truth = Pose2D::new(0.0, 5.0 * cfg.delta_xy, -3.0 * cfg.delta_xy);
    let pair = make_pair(&scene, truth, spec)?;
    let got = matcher.scan_match(&pair.f, &pair.g, None)?.pose;
    let (dtheta, dt) = pose_gap(&got, &truth, &cfg);
    checks.push(Check {
        suite: SUITE,
        name: "integer-shift",
        passed: dtheta <= 2.0 && dt <= 0.25,
        detail: format!(
            "rotation off by {dtheta:.2} bins, translation by {dt:.3} cells (limits 2, 0.25)"
        ),
    });

    let pairs = 4;
    let mut agree = 0;
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..pairs {
        let scene = Scene::random(opts.seed.wrapping_add(100 + k), spec);
        let rel = random_relative(&mut rng, 0.3, 0.05 * spec.extent());
        let pair = make_pair(&scene, rel, spec)?;
        let m = matcher.scan_match(&pair.f, &pair.g, None)?.pose;
        let o = brute_force_match(&pair.f, &pair.g, &cfg.theta_grid(), &cfg)?.pose;
        let (dtheta, dt) = pose_gap(&m, &o, &cfg);
        worst = (worst.0.max(dtheta), worst.1.max(dt));
        if dtheta <= 2.0 && dt <= 1.0 {
            agree += 1;
        }
    }
    checks.push(Check {
        suite: SUITE,
        name: "matcher-vs-oracle",
        passed: agree == pairs,
        detail: format!(
            "{agree}/{pairs} pairs within 2 bins and 1 cell (worst {:.2} bins, {:.2} cells)",
            worst.0, worst.1
        ),
    });

    // Self-match through the rendering path sanity-checks the identity.
    let f = render(&scene, &Pose2D::identity(), spec, 0);
    let got = matcher.scan_match(&f, &f, None)?.pose;
    let (dtheta, dt) = pose_gap(&got, &Pose2D::identity(), &cfg);
    checks.push(Check {
        suite: SUITE,
        name: "self-match",
        passed: dtheta * cfg.delta_theta <= 1e-3 && dt <= 0.1,
        detail: format!(
            "rotation {:.2e} rad, translation {dt:.3} cells (limits 1e-3, 0.1)",
            dtheta * cfg.delta_theta
        ),
    });

    Ok(checks)
}

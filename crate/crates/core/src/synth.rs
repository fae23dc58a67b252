//! Synthetic radar-like scenes: Gaussian landmark blobs observed from a
//! sensor pose, with additive speckle, a sensor-centred ring artefact and
//! cell dropout.
//!
//! Every random draw comes from a ChaCha stream keyed by the scene seed and a
//! per-scan stream id, so output is bit-reproducible.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Pose2D};
use crate::imageops::{MaskGrid, ScanGrid};

/// Blobs are evaluated out to this many standard deviations.
const BLOB_SUPPORT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    /// World position, metres.
    pub x: f64,
    pub y: f64,
    /// Peak power.
    pub intensity: f64,
    /// Gaussian standard deviation, metres.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of additive Gaussian speckle.
    pub speckle_sigma: f64,
    /// Peak power of the concentric ring artefact; 0 disables it.
    pub ring_amplitude: f64,
    /// Radial spacing of the rings, metres.
    pub ring_spacing: f64,
    /// Probability that a cell reads zero.
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            speckle_sigma: 0.05,
            ring_amplitude: 0.0,
            ring_spacing: 8.0,
            dropout: 0.01,
        }
    }
}

impl NoiseModel {
    pub fn silent() -> Self {
        NoiseModel {
            speckle_sigma: 0.0,
            ring_amplitude: 0.0,
            ring_spacing: 8.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default, rename = "landmark")]
    pub landmarks: Vec<Landmark>,
}

/// Landmarks in the default scene.
pub const DEFAULT_LANDMARKS: usize = 60;
/// Fraction of the grid extent (per axis) the default landmarks cover.
pub const DEFAULT_COVERAGE: f64 = 0.7;

impl Scene {
    pub fn new(seed: u64, noise: NoiseModel, landmarks: Vec<Landmark>) -> Result<Self> {
        let scene = Scene {
            seed,
            noise,
            landmarks,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.landmarks.iter().enumerate() {
            if !(l.x.is_finite() && l.y.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "landmark {i} has a non-finite position"
                )));
            }
            if !(l.intensity.is_finite() && l.intensity > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "landmark {i} intensity must be positive"
                )));
            }
            if !(l.radius.is_finite() && l.radius > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "landmark {i} radius must be positive"
                )));
            }
        }
        let n = &self.noise;
        if !(n.speckle_sigma >= 0.0 && n.ring_amplitude >= 0.0 && n.ring_spacing > 0.0) {
            return Err(Error::InvalidInput(
                "noise amplitudes must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&n.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout {} outside [0, 1]",
                n.dropout
            )));
        }
        Ok(())
    }

    /// The default scene: 60 landmarks uniform over the central 70% of the
    /// grid, log-uniform intensity in [0.3, 1], radius in [1.5, 3] cells.
    pub fn random(seed: u64, spec: GridSpec) -> Self {
        let half = 0.5 * DEFAULT_COVERAGE * spec.extent();
        Self::random_in(seed, spec, [-half, -half], [half, half], DEFAULT_LANDMARKS)
    }

    /// A scene with the default landmark density covering everything visible
    /// from any of `poses`.
    pub fn random_covering(seed: u64, spec: GridSpec, poses: &[Pose2D]) -> Self {
        let reach = 0.5 * spec.extent() * std::f64::consts::SQRT_2;
        let (mut lo, mut hi) = ([0.0f64, 0.0f64], [0.0f64, 0.0f64]);
        for p in poses {
            lo = [lo[0].min(p.tx), lo[1].min(p.ty)];
            hi = [hi[0].max(p.tx), hi[1].max(p.ty)];
        }
        let lo = [lo[0] - reach, lo[1] - reach];
        let hi = [hi[0] + reach, hi[1] + reach];
        let density = DEFAULT_LANDMARKS as f64 / (DEFAULT_COVERAGE * spec.extent()).powi(2);
        let count = (density * (hi[0] - lo[0]) * (hi[1] - lo[1])).round() as usize;
        Self::random_in(seed, spec, lo, hi, count)
    }

    fn random_in(seed: u64, spec: GridSpec, lo: [f64; 2], hi: [f64; 2], count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ln_lo, ln_hi) = (0.3f64.ln(), 1.0f64.ln());
        let landmarks = (0..count)
            .map(|_| Landmark {
                x: rng.random_range(lo[0]..hi[0]),
                y: rng.random_range(lo[1]..hi[1]),
                intensity: rng.random_range(ln_lo..ln_hi).exp(),
                radius: rng.random_range(1.5..3.0) * spec.delta(),
            })
            .collect();
        Scene {
            seed,
            noise: NoiseModel::default(),
            landmarks,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene =
            toml::from_str(text).map_err(|e| Error::InvalidInput(e.message().to_string()))?;
        scene.validate()?;
        Ok(scene)
    }
}

/// Distance from radius `r` to the nearest ring (rings sit at positive
/// multiples of `spacing`).
fn ring_distance(r: f64, spacing: f64) -> f64 {
    let k = (r / spacing).round().max(1.0);
    (r - k * spacing).abs()
}

/// Renders the scene as seen by a sensor at `pose` (world frame).
///
/// `stream` selects an independent noise draw for the same scene seed.
pub fn render(scene: &Scene, pose: &Pose2D, spec: GridSpec, stream: u64) -> ScanGrid {
    let n = spec.n();
    let delta = spec.delta();
    let mut values = Array2::<f64>::zeros((n, n));
    let to_sensor = pose.inverse();

    for l in &scene.landmarks {
        let p = to_sensor.apply([l.x, l.y]);
        let (row, col) = spec.world_to_cell(p);
        let reach = BLOB_SUPPORT * l.radius / delta;
        let r_lo = (row - reach).ceil().max(0.0);
        let r_hi = (row + reach).floor().min((n - 1) as f64);
        let c_lo = (col - reach).ceil().max(0.0);
        let c_hi = (col + reach).floor().min((n - 1) as f64);
        if r_lo > r_hi || c_lo > c_hi {
            continue;
        }
        let inv_two_var = 1.0 / (2.0 * l.radius * l.radius);
        for r in r_lo as usize..=r_hi as usize {
            for c in c_lo as usize..=c_hi as usize {
                let [x, y] = spec.cell_to_world(r, c);
                let d2 = (x - p[0]).powi(2) + (y - p[1]).powi(2);
                values[[r, c]] += l.intensity * (-d2 * inv_two_var).exp();
            }
        }
    }

    let noise = &scene.noise;
    if noise.ring_amplitude > 0.0 {
        let inv_two_var = 1.0 / (2.0 * delta * delta);
        for ((r, c), v) in values.indexed_iter_mut() {
            let [x, y] = spec.cell_to_world(r, c);
            let d = ring_distance(x.hypot(y), noise.ring_spacing);
            *v += noise.ring_amplitude * (-d * d * inv_two_var).exp();
        }
    }

    if noise.speckle_sigma > 0.0 || noise.dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(stream);
        let speckle = Normal::new(0.0, noise.speckle_sigma).expect("validated sigma");
        for v in values.iter_mut() {
            if noise.speckle_sigma > 0.0 {
                *v += speckle.sample(&mut rng);
            }
            if noise.dropout > 0.0 && rng.random::<f64>() < noise.dropout {
                *v = 0.0;
            }
        }
    }
    values.mapv_inplace(|v| v.max(0.0));
    ScanGrid::from_parts(spec, values)
}

/// Mask that zeroes the cells covered by the ring artefact.
pub fn ring_mask(noise: &NoiseModel, spec: GridSpec) -> MaskGrid {
    let halfwidth = 2.5 * spec.delta();
    let n = spec.n();
    let values = Array2::from_shape_fn((n, n), |(r, c)| {
        let [x, y] = spec.cell_to_world(r, c);
        if noise.ring_amplitude > 0.0 && ring_distance(x.hypot(y), noise.ring_spacing) < halfwidth {
            0.0
        } else {
            1.0
        }
    });
    MaskGrid::new(spec, values).expect("mask values are 0 or 1")
}

/// Largest translation (fraction of the grid extent) a synthetic pair or
/// trajectory step may contain.
pub const MAX_TRANSLATION_FRACTION: f64 = 0.25;

fn check_envelope(pose: &Pose2D, spec: GridSpec) -> Result<()> {
    let limit = MAX_TRANSLATION_FRACTION * spec.extent();
    if pose.theta.abs() >= PI / 2.0 {
        return Err(Error::InvalidInput(format!(
            "rotation {} rad outside the (-pi/2, pi/2) search envelope",
            pose.theta
        )));
    }
    let t = pose.tx.hypot(pose.ty);
    if t >= limit {
        return Err(Error::InvalidInput(format!(
            "translation {t} m exceeds the {limit} m search envelope"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScanPair {
    pub f: ScanGrid,
    pub g: ScanGrid,
    /// Transform the matcher should recover (`f(x) ≈ g(R x + t)`).
    pub truth: Pose2D,
}

/// Renders `f` at the origin and `g` so that `relative` maps `f`'s frame
/// into `g`'s (the sensor of `g` sits at `relative⁻¹`). Noise draws of the
/// two scans are independent.
pub fn make_pair(scene: &Scene, relative: Pose2D, spec: GridSpec) -> Result<ScanPair> {
    check_envelope(&relative, spec)?;
    Ok(ScanPair {
        f: render(scene, &Pose2D::identity(), spec, 0),
        g: render(scene, &relative.inverse(), spec, 1),
        truth: relative,
    })
}

/// Draws a relative pose with |θ| ≤ `max_theta` and translation uniform over
/// the disc of radius `max_translation`.
pub fn random_relative<R: Rng>(rng: &mut R, max_theta: f64, max_translation: f64) -> Pose2D {
    let theta = rng.random_range(-max_theta..=max_theta);
    let r = max_translation * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    Pose2D::new(theta, r * phi.cos(), r * phi.sin())
}

/// Constant body-frame velocity with Gaussian per-step jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionModel {
    /// Metres per frame along the sensor's x axis.
    pub forward: f64,
    /// Metres per frame along the sensor's y axis.
    pub lateral: f64,
    /// Radians per frame.
    pub yaw_rate: f64,
    /// Standard deviation of per-step translation jitter, metres.
    pub jitter_translation: f64,
    /// Standard deviation of per-step rotation jitter, radians.
    pub jitter_rotation: f64,
    pub seed: u64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            forward: 2.0,
            lateral: 0.0,
            yaw_rate: 0.0,
            jitter_translation: 0.2,
            jitter_rotation: 0.02,
            seed: 0,
        }
    }
}

impl MotionModel {
    /// Per-step sensor motions for `frames` frames (`frames - 1` steps).
    pub fn steps(&self, frames: usize) -> Result<Vec<Pose2D>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter_t = Normal::new(0.0, self.jitter_translation)
            .map_err(|e| Error::InvalidInput(format!("translation jitter: {e}")))?;
        let jitter_r = Normal::new(0.0, self.jitter_rotation)
            .map_err(|e| Error::InvalidInput(format!("rotation jitter: {e}")))?;
        Ok((1..frames)
            .map(|_| {
                let theta = self.yaw_rate + jitter_r.sample(&mut rng);
                let x = self.forward + jitter_t.sample(&mut rng);
                let y = self.lateral + jitter_t.sample(&mut rng);
                Pose2D::new(theta, x, y)
            })
            .collect())
    }

    /// Absolute sensor poses starting at the identity.
    pub fn poses(&self, frames: usize) -> Result<Vec<Pose2D>> {
        let mut poses = Vec::with_capacity(frames);
        if frames == 0 {
            return Ok(poses);
        }
        poses.push(Pose2D::identity());
        for step in self.steps(frames)? {
            let next = poses.last().expect("non-empty").compose(&step);
            poses.push(next);
        }
        Ok(poses)
    }
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub scans: Vec<ScanGrid>,
    /// Absolute sensor poses, `poses[0]` is the identity.
    pub poses: Vec<Pose2D>,
}

/// Renders `frames` scans along the motion model's trajectory. Scan `i`
/// uses noise stream `i`.
pub fn make_trajectory(
    scene: &Scene,
    motion: &MotionModel,
    frames: usize,
    spec: GridSpec,
) -> Result<Sequence> {
    for step in motion.steps(frames)? {
        check_envelope(&step, spec)?;
    }
    let poses = motion.poses(frames)?;
    let scans = poses
        .iter()
        .enumerate()
        .map(|(i, p)| render(scene, p, spec, i as u64))
        .collect();
    Ok(Sequence { scans, poses })
}

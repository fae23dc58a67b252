//! Trajectory integration and KITTI-style drift scoring, reduced to SE(2).
//!
//! Drift follows the KITTI odometry devkit: for every start frame (with a
//! configurable stride) and every segment length, find the first frame whose
//! travelled distance exceeds the start's by that length, compare the
//! estimated and true relative motion over the segment, and normalize the
//! residual by the segment length. The rotation residual is the absolute
//! heading error of the segment.

use crate::error::{Error, Result};
use crate::geometry::Pose2D;

/// Segment lengths used by the KITTI benchmark, metres.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose2D>,
    timestamps: Option<Vec<f64>>,
    cumulative_distance: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from absolute poses, re-expressed relative to the
    /// first pose so that `poses[0]` is the identity.
    pub fn new(poses: Vec<Pose2D>) -> Self {
        let origin = poses.first().copied().unwrap_or_default().inverse();
        let mut poses: Vec<Pose2D> = poses.iter().map(|p| origin.compose(p)).collect();
        if let Some(first) = poses.first_mut() {
            *first = Pose2D::identity();
        }
        let mut cumulative_distance = Vec::with_capacity(poses.len());
        let mut total = 0.0;
        for (i, p) in poses.iter().enumerate() {
            if i > 0 {
                let q = poses[i - 1];
                total += (p.tx - q.tx).hypot(p.ty - q.ty);
            }
            cumulative_distance.push(total);
        }
        Trajectory {
            poses,
            timestamps: None,
            cumulative_distance,
        }
    }

    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != self.poses.len() {
            return Err(Error::Shape(format!(
                "{} timestamps for {} poses",
                timestamps.len(),
                self.poses.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn cumulative_distance(&self) -> &[f64] {
        &self.cumulative_distance
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Frame-to-frame motions `poses[k-1]⁻¹ ∘ poses[k]`.
    pub fn relatives(&self) -> Vec<Pose2D> {
        self.poses
            .windows(2)
            .map(|w| w[0].inverse().compose(&w[1]))
            .collect()
    }
}

/// Chains frame-to-frame motions into absolute poses starting at the identity.
pub fn integrate(relatives: &[Pose2D]) -> Trajectory {
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    poses.push(Pose2D::identity());
    for r in relatives {
        let next = poses.last().expect("non-empty").compose(r);
        poses.push(next);
    }
    Trajectory::new(poses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOptions {
    pub lengths: Vec<f64>,
    /// Start a segment at every `stride`-th frame.
    pub stride: usize,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            lengths: KITTI_LENGTHS.to_vec(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub first_frame: usize,
    pub length: f64,
    /// Translation residual divided by the segment length.
    pub translation: f64,
    /// Heading residual (radians) divided by the segment length.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthDrift {
    pub length: f64,
    pub segments: usize,
    pub translation_pct: f64,
    pub rotation_deg_per_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub segments: usize,
    pub translation_pct: f64,
    pub rotation_deg_per_km: f64,
    pub per_length: Vec<LengthDrift>,
}

fn to_pct(v: f64) -> f64 {
    100.0 * v
}

fn to_deg_per_km(v: f64) -> f64 {
    v.to_degrees() * 1000.0
}

impl DriftReport {
    fn from_segments(errors: &[SegmentError], lengths: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mean = |it: &mut dyn Iterator<Item = f64>, n: usize| it.sum::<f64>() / n as f64;
        let per_length = lengths
            .iter()
            .filter_map(|&len| {
                let errs: Vec<&SegmentError> = errors.iter().filter(|e| e.length == len).collect();
                if errs.is_empty() {
                    return None;
                }
                Some(LengthDrift {
                    length: len,
                    segments: errs.len(),
                    translation_pct: to_pct(mean(
                        &mut errs.iter().map(|e| e.translation),
                        errs.len(),
                    )),
                    rotation_deg_per_km: to_deg_per_km(mean(
                        &mut errs.iter().map(|e| e.rotation),
                        errs.len(),
                    )),
                })
            })
            .collect();
        Some(DriftReport {
            segments: errors.len(),
            translation_pct: to_pct(mean(
                &mut errors.iter().map(|e| e.translation),
                errors.len(),
            )),
            rotation_deg_per_km: to_deg_per_km(mean(
                &mut errors.iter().map(|e| e.rotation),
                errors.len(),
            )),
            per_length,
        })
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "segments = {}\ntranslation_pct = {:.6}\nrotation_deg_per_km = {:.6}\n",
            self.segments, self.translation_pct, self.rotation_deg_per_km
        );
        for l in &self.per_length {
            out.push_str(&format!(
                "length_{} = {{ segments = {}, translation_pct = {:.6}, rotation_deg_per_km = {:.6} }}\n",
                l.length, l.segments, l.translation_pct, l.rotation_deg_per_km
            ));
        }
        out
    }

    /// One row per segment length plus an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,segments,translation_pct,rotation_deg_per_km\n");
        for l in &self.per_length {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                l.length, l.segments, l.translation_pct, l.rotation_deg_per_km
            ));
        }
        out.push_str(&format!(
            "all,{},{:.6},{:.6}\n",
            self.segments, self.translation_pct, self.rotation_deg_per_km
        ));
        out
    }
}

/// First frame after `first` whose distance exceeds `dist[first] + length`.
fn last_frame(dist: &[f64], first: usize, length: f64) -> Option<usize> {
    let target = dist[first] + length;
    (first..dist.len()).find(|&i| dist[i] > target)
}

/// Every per-segment residual of `estimate` against `truth`.
pub fn segment_errors(
    estimate: &Trajectory,
    truth: &Trajectory,
    opts: &DriftOptions,
) -> Result<Vec<SegmentError>> {
    if estimate.len() != truth.len() {
        return Err(Error::Shape(format!(
            "estimate has {} frames, ground truth {}",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::InvalidInput("drift needs at least 2 frames".into()));
    }
    if opts.stride == 0 || opts.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Config(
            "segment lengths must be positive and stride non-zero".into(),
        ));
    }
    let dist = truth.cumulative_distance();
    let mut errors = Vec::new();
    for first in (0..truth.len()).step_by(opts.stride) {
        for &length in &opts.lengths {
            let Some(last) = last_frame(dist, first, length) else {
                continue;
            };
            let delta_truth = truth.poses[first].inverse().compose(&truth.poses[last]);
            let delta_est = estimate.poses[first]
                .inverse()
                .compose(&estimate.poses[last]);
            let residual = delta_est.inverse().compose(&delta_truth);
            errors.push(SegmentError {
                first_frame: first,
                length,
                translation: residual.tx.hypot(residual.ty) / length,
                rotation: residual.theta.abs() / length,
            });
        }
    }
    Ok(errors)
}

/// Average drift over all segments. `Ok(None)` when the trajectory is too
/// short for any segment length.
pub fn kitti_drift(
    estimate: &Trajectory,
    truth: &Trajectory,
    opts: &DriftOptions,
) -> Result<Option<DriftReport>> {
    let errors = segment_errors(estimate, truth, opts)?;
    Ok(DriftReport::from_segments(&errors, &opts.lengths))
}

/// How per-segment errors from several sequences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Average segments within each sequence, then average the sequences.
    #[default]
    SegmentsThenSequences,
    /// Pool all segments of all sequences into one average.
    Pooled,
}

/// Drift over several `(estimate, truth)` sequences. Sequences too short for
/// any segment are skipped.
pub fn kitti_drift_sequences(
    sequences: &[(Trajectory, Trajectory)],
    opts: &DriftOptions,
    averaging: Averaging,
) -> Result<Option<DriftReport>> {
    let mut per_sequence = Vec::new();
    let mut pooled = Vec::new();
    for (est, truth) in sequences {
        let errors = segment_errors(est, truth, opts)?;
        if let Some(report) = DriftReport::from_segments(&errors, &opts.lengths) {
            per_sequence.push(report);
        }
        pooled.extend(errors);
    }
    match averaging {
        Averaging::Pooled => Ok(DriftReport::from_segments(&pooled, &opts.lengths)),
        Averaging::SegmentsThenSequences => {
            if per_sequence.is_empty() {
                return Ok(None);
            }
            let n = per_sequence.len() as f64;
            let mut report = DriftReport::from_segments(&pooled, &opts.lengths).expect("non-empty");
            report.translation_pct =
                per_sequence.iter().map(|r| r.translation_pct).sum::<f64>() / n;
            report.rotation_deg_per_km = per_sequence
                .iter()
                .map(|r| r.rotation_deg_per_km)
                .sum::<f64>()
                / n;
            Ok(Some(report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(frames: usize, speed: f64) -> Trajectory {
        integrate(&vec![Pose2D::new(0.0, speed, 0.0); frames - 1])
    }

    fn random_relatives(n: usize, seed: u64) -> Vec<Pose2D> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Pose2D::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(0.5..3.0),
                    rng.random_range(-0.5..0.5),
                )
            })
            .collect()
    }

    #[test]
    fn integrate_examples() {
        let still = integrate(&[Pose2D::identity(); 4]);
        assert!(still.poses().iter().all(|p| *p == Pose2D::identity()));
        assert_eq!(still.cumulative_distance(), &[0.0; 5]);

        let line = straight(5, 1.0);
        for (i, p) in line.poses().iter().enumerate() {
            assert_eq!(*p, Pose2D::new(0.0, i as f64, 0.0));
        }
        assert_eq!(line.cumulative_distance(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn differencing_then_integrating_round_trips() {
        let truth = integrate(&random_relatives(200, 3));
        let back = integrate(&truth.relatives());
        for (a, b) in back.poses().iter().zip(truth.poses()) {
            assert!((a.theta - b.theta).abs() < 1e-10);
            assert!((a.tx - b.tx).abs() < 1e-10 && (a.ty - b.ty).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_is_rebased_to_identity() {
        let offset = Pose2D::new(0.3, 10.0, -4.0);
        let poses = vec![offset, offset.compose(&Pose2D::new(0.0, 1.0, 0.0))];
        let t = Trajectory::new(poses);
        assert_eq!(t.poses()[0], Pose2D::identity());
        assert!((t.poses()[1].tx - 1.0).abs() < 1e-12);
        assert!(t.clone().with_timestamps(vec![0.0]).is_err());
        assert!(t.with_timestamps(vec![0.0, 0.25]).is_ok());
    }

    #[test]
    fn perfect_estimate_has_zero_drift() {
        let truth = integrate(&random_relatives(400, 4));
        let r = kitti_drift(&truth, &truth, &DriftOptions::default())
            .unwrap()
            .unwrap();
        assert!(r.segments > 0);
        assert!(r.translation_pct.abs() < 1e-9);
        assert!(r.rotation_deg_per_km.abs() < 1e-9);
    }

    #[test]
    fn constant_bias_on_straight_line() {
        let (frames, speed) = (301, 2.0);
        let bias = [0.03, -0.04];
        let truth = straight(frames, speed);
        let est = integrate(&vec![
            Pose2D::new(0.0, speed + bias[0], bias[1]);
            frames - 1
        ]);
        let opts = DriftOptions {
            lengths: vec![100.0, 200.0],
            stride: 1,
        };
        let r = kitti_drift(&est, &truth, &opts).unwrap().unwrap();

        // By hand: a segment of length L spans the first frame with distance
        // strictly beyond L, i.e. m = L / v + 1 steps, each off by |b|.
        let b = bias[0].hypot(bias[1]);
        let mut expected = Vec::new();
        for len in [100.0, 200.0] {
            let steps = (len / speed) as usize + 1;
            let count = (0..frames).filter(|&f| f + steps < frames).count();
            expected.extend(std::iter::repeat_n(100.0 * steps as f64 * b / len, count));
        }
        let want = expected.iter().sum::<f64>() / expected.len() as f64;
        assert_eq!(r.segments, expected.len());
        assert!(
            (r.translation_pct - want).abs() < 1e-9,
            "{} vs {want}",
            r.translation_pct
        );
        assert!(r.rotation_deg_per_km.abs() < 1e-9);
        assert_eq!(r.per_length.len(), 2);
        assert!((r.per_length[0].translation_pct - 100.0 * 51.0 * b / 100.0).abs() < 1e-9);
    }

    #[test]
    fn short_trajectories_and_errors() {
        let truth = straight(20, 1.0);
        assert_eq!(
            kitti_drift(&truth, &truth, &DriftOptions::default()).unwrap(),
            None
        );
        assert!(kitti_drift(
            &straight(1, 1.0),
            &straight(1, 1.0),
            &DriftOptions::default()
        )
        .is_err());
        assert!(kitti_drift(
            &straight(5, 1.0),
            &straight(6, 1.0),
            &DriftOptions::default()
        )
        .is_err());
        let bad = DriftOptions {
            lengths: vec![0.0],
            stride: 1,
        };
        assert!(kitti_drift(&truth, &truth, &bad).is_err());
    }

    #[test]
    fn sequence_averaging_orders() {
        let short_truth = straight(120, 1.0);
        let long_truth = straight(400, 1.0);
        let short_est = integrate(&vec![Pose2D::new(0.0, 1.01, 0.0); 119]);
        let long_est = integrate(&vec![Pose2D::new(0.0, 1.03, 0.0); 399]);
        let opts = DriftOptions {
            lengths: vec![100.0],
            stride: 1,
        };
        let seqs = vec![(short_est, short_truth), (long_est, long_truth)];
        let per = kitti_drift_sequences(&seqs, &opts, Averaging::SegmentsThenSequences)
            .unwrap()
            .unwrap();
        let pooled = kitti_drift_sequences(&seqs, &opts, Averaging::Pooled)
            .unwrap()
            .unwrap();
        // 101 steps per segment: 1.01% and 3.03% drift respectively.
        assert!((per.translation_pct - 0.5 * (1.01 + 3.03)).abs() < 1e-9);
        let (n_short, n_long) = (120 - 101, 400 - 101);
        let want = (1.01 * n_short as f64 + 3.03 * n_long as f64) / (n_short + n_long) as f64;
        assert!((pooled.translation_pct - want).abs() < 1e-9);
    }

    #[test]
    fn report_formats() {
        let truth = straight(260, 1.0);
        let est = integrate(&vec![Pose2D::new(0.0, 1.01, 0.0); 259]);
        let r = kitti_drift(&est, &truth, &DriftOptions::default())
            .unwrap()
            .unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("length,segments,translation_pct,rotation_deg_per_km\n100,"));
        assert!(csv.lines().last().unwrap().starts_with("all,"));
        assert!(r.to_text().contains("translation_pct = "));
    }

    proptest! {
        #[test]
        fn invariant_to_global_rigid_transform(seed in 0u64..50, theta in -3.0f64..3.0, x in -100.0f64..100.0, y in -100.0f64..100.0) {
            let truth = integrate(&random_relatives(150, seed));
            let est = integrate(&random_relatives(150, seed + 1000)
                .iter()
                .zip(truth.relatives())
                .map(|(noise, r)| r.compose(&Pose2D::new(0.01 * noise.theta, 0.01 * noise.tx, 0.01 * noise.ty)))
                .collect::<Vec<_>>());
            let opts = DriftOptions { lengths: vec![50.0, 100.0], stride: 3 };
            let base = kitti_drift(&est, &truth, &opts).unwrap().unwrap();

            let g = Pose2D::new(theta, x, y);
            // Bypass the rebasing in `Trajectory::new` by comparing segment errors directly.
            let moved = |t: &Trajectory| Trajectory {
                poses: t.poses().iter().map(|p| g.compose(p)).collect(),
                timestamps: None,
                cumulative_distance: t.cumulative_distance().to_vec(),
            };
            let shifted = kitti_drift(&moved(&est), &moved(&truth), &opts).unwrap().unwrap();
            prop_assert!((base.translation_pct - shifted.translation_pct).abs() < 1e-9);
            prop_assert!((base.rotation_deg_per_km - shifted.rotation_deg_per_km).abs() < 1e-9);
        }

        #[test]
        fn doubling_errors_at_least_doubles_drift(seed in 0u64..50) {
            let frames = 300;
            let truth = straight(frames, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let errs: Vec<[f64; 2]> = (1..frames).map(|_| [rng.random_range(0.0..0.05), rng.random_range(-0.05..0.05)]).collect();
            let est = |k: f64| integrate(&errs.iter().map(|e| Pose2D::new(0.0, 1.0 + k * e[0], k * e[1])).collect::<Vec<_>>());
            let opts = DriftOptions { lengths: vec![100.0], stride: 1 };
            let once = kitti_drift(&est(1.0), &truth, &opts).unwrap().unwrap();
            let twice = kitti_drift(&est(2.0), &truth, &opts).unwrap().unwrap();
            prop_assert!(twice.translation_pct >= 2.0 * once.translation_pct - 1e-9);
        }
    }
}

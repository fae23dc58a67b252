//! Decoupled Fourier scan matching.
//!
//! Rotation is recovered first from the translation-invariant magnitude
//! spectra (resampled to polar coordinates, where a rotation becomes an
//! angular shift), then translation is recovered by correlating `f` with `g`
//! rotated back by that angle. One rotation search plus one translation
//! search replaces the joint search over every rotation candidate.
//!
//! # Pose convention
//!
//! [`Matcher::scan_match`] returns the transform `T = (R, t)` that maps
//! points expressed in `f`'s frame into `g`'s frame, so that
//! `f(x) ≈ g(R x + t)`. If `g` was captured by a sensor that moved by `M`
//! relative to `f`'s sensor, then `T = M⁻¹`.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotate_vec, GridSpec, Pose2D};
use crate::imageops::{
    apply_mask, bandpass_mask, cart2pol, hadamard, hanning_window, rotate_array, wrap_pad,
    zero_pad_array, MaskGrid, PolarGrid, ScanGrid,
};
use crate::spectral::{
    dft2, magnitude, next_fast_len, xcorr_with, CorrelationKernel, CorrelationSurface,
};

/// How raw correlation scores are rescaled before the softmax gain applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    /// Divide by the largest absolute score on the surface.
    #[default]
    MaxAbs,
    /// Use raw scores; the gain then depends on the data's power scale.
    None,
}

/// Every parameter of the scan matching procedure.
///
/// Field names double as the keys of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Number of rotation candidates.
    pub n_theta: usize,
    /// Rotation bin width in radians.
    pub delta_theta: f64,
    /// Softmax gain for the rotation surface.
    pub t_theta: f64,
    /// Cells per grid side (odd).
    pub n_xy: usize,
    /// Metres per cell.
    pub delta_xy: f64,
    /// Softmax gain for the translation surface.
    pub t_xy: f64,
    /// Lower band-pass limit as a fraction of Nyquist.
    pub band_lo: f64,
    /// Upper band-pass limit as a fraction of Nyquist.
    pub band_hi: f64,
    /// Radial samples of the polar spectrum; `ceil(n_xy / 2)` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_radius: Option<usize>,
    /// Circular padding of the polar angle axis; `ceil(n_theta / 8)` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pad_angle: Option<usize>,
    /// Half-width in bins of the soft-argmax window around the hard peak.
    pub softargmax_window: usize,
    pub score_normalization: ScoreNormalization,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            n_theta: 733,
            delta_theta: PI / 733.0,
            t_theta: 2.0,
            n_xy: 255,
            delta_xy: 0.4,
            t_xy: 1.0,
            band_lo: 0.03,
            band_hi: 0.75,
            n_radius: None,
            pad_angle: None,
            softargmax_window: 16,
            score_normalization: ScoreNormalization::MaxAbs,
        }
    }
}

impl MatchConfig {
    /// Config for a different grid and rotation resolution, with the
    /// rotation candidates spanning half a turn.
    pub fn with_resolution(n_xy: usize, n_theta: usize) -> Self {
        MatchConfig {
            n_xy,
            n_theta,
            delta_theta: PI / n_theta as f64,
            ..MatchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.n_theta == 0 {
            return err("n_theta must be positive".into());
        }
        for (name, v) in [
            ("delta_theta", self.delta_theta),
            ("t_theta", self.t_theta),
            ("delta_xy", self.delta_xy),
            ("t_xy", self.t_xy),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.n_theta as f64 * self.delta_theta > PI * (1.0 + 1e-12) {
            return err(format!(
                "rotation candidates span {} rad, more than pi",
                self.n_theta as f64 * self.delta_theta
            ));
        }
        GridSpec::new(self.n_xy, self.delta_xy)?;
        bandpass_mask(3, self.band_lo, self.band_hi)?;
        if self.n_radius() < 2 {
            return err(format!(
                "n_radius must be at least 2, got {}",
                self.n_radius()
            ));
        }
        if self.n_theta > 1 && self.pad_angle() >= self.n_theta {
            return err(format!(
                "pad_angle {} must be smaller than n_theta {}",
                self.pad_angle(),
                self.n_theta
            ));
        }
        if self.softargmax_window == 0 {
            return err("softargmax_window must be positive".into());
        }
        Ok(())
    }

    pub fn n_radius(&self) -> usize {
        self.n_radius.unwrap_or(self.n_xy.div_ceil(2))
    }

    pub fn pad_angle(&self) -> usize {
        self.pad_angle.unwrap_or(self.n_theta.div_ceil(8))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n_xy, self.delta_xy)
    }

    /// Rotation candidates `(k - n_theta / 2) * delta_theta`.
    pub fn theta_grid(&self) -> Vec<f64> {
        let mid = (self.n_theta / 2) as isize;
        (0..self.n_theta)
            .map(|k| (k as isize - mid) as f64 * self.delta_theta)
            .collect()
    }

    /// Side length of the zero-padded translation correlation.
    pub fn padded_len(&self) -> usize {
        next_fast_len(2 * self.n_xy - 1)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: MatchConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Location of a correlation peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Soft-argmax coordinate along the row axis.
    pub row: f64,
    /// Soft-argmax coordinate along the column axis.
    pub col: f64,
    pub hard_index: (usize, usize),
    pub hard_value: f64,
}

/// Temperature-controlled softmax followed by a probability-weighted mean of
/// the surface coordinates, restricted to a window around the hard argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftArgmax {
    pub gain: f64,
    /// Half-width in bins.
    pub window: usize,
    pub normalization: ScoreNormalization,
}

impl SoftArgmax {
    pub fn new(gain: f64, window: usize) -> Self {
        SoftArgmax {
            gain,
            window,
            normalization: ScoreNormalization::MaxAbs,
        }
    }

    pub fn with_normalization(mut self, normalization: ScoreNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn locate(&self, surface: &CorrelationSurface) -> Peak {
        let scores = surface.scores();
        let (hard_index, hard_value) = surface.argmax();
        let scale = match self.normalization {
            ScoreNormalization::MaxAbs => {
                let m = scores.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
            ScoreNormalization::None => 1.0,
        };
        let (rows, cols) = scores.dim();
        let (r0, r1) = window_bounds(hard_index.0, self.window, rows);
        let (c0, c1) = window_bounds(hard_index.1, self.window, cols);

        let (mut total, mut row_acc, mut col_acc) = (0.0, 0.0, 0.0);
        for r in r0..r1 {
            for c in c0..c1 {
                let w = (self.gain * (scores[[r, c]] - hard_value) / scale).exp();
                total += w;
                row_acc += w * surface.row_coords()[r];
                col_acc += w * surface.col_coords()[c];
            }
        }
        Peak {
            row: row_acc / total,
            col: col_acc / total,
            hard_index,
            hard_value,
        }
    }
}

fn window_bounds(centre: usize, half: usize, len: usize) -> (usize, usize) {
    (centre.saturating_sub(half), (centre + half + 1).min(len))
}

#[derive(Debug, Clone)]
pub struct RotationEstimate {
    pub theta: f64,
    pub surface: CorrelationSurface,
    pub peak: Peak,
}

#[derive(Debug, Clone)]
pub struct TranslationEstimate {
    /// Metres, in `f`'s frame convention (see module docs).
    pub translation: [f64; 2],
    pub surface: CorrelationSurface,
    pub peak: Peak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub theta_peak_value: f64,
    /// Rotation at the hard argmax, radians.
    pub theta_hard: f64,
    pub xy_peak_value: f64,
    /// Translation at the hard argmax before back-rotation, metres `[x, y]`.
    pub xy_hard: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub pose: Pose2D,
    /// Rotation scores over the candidate angles (1D).
    pub theta_surface: CorrelationSurface,
    /// Translation scores over (row lag, column lag) in metres.
    pub xy_surface: CorrelationSurface,
    pub diagnostics: Diagnostics,
}

/// A scan matcher with precomputed filters. Immutable, so one instance can
/// be shared across threads.
#[derive(Debug, Clone)]
pub struct Matcher {
    cfg: MatchConfig,
    spec: GridSpec,
    hann: Array2<f64>,
    band: Array2<f64>,
    polar: PolarGrid,
    kernel: CorrelationKernel,
}

impl Matcher {
    pub fn new(cfg: MatchConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.grid_spec()?;
        let polar = PolarGrid {
            n_angle: cfg.n_theta,
            n_radius: cfg.n_radius(),
            angle_span: cfg.n_theta as f64 * cfg.delta_theta,
        };
        Ok(Matcher {
            hann: hanning_window(spec).into_values(),
            band: bandpass_mask(cfg.n_xy, cfg.band_lo, cfg.band_hi)?,
            polar,
            spec,
            cfg,
            kernel: CorrelationKernel::Correlation,
        })
    }

    /// Replaces the frequency-domain product. Only the verification suites'
    /// fault injection uses anything but [`CorrelationKernel::Correlation`].
    #[doc(hidden)]
    pub fn with_kernel(mut self, kernel: CorrelationKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn config(&self) -> &MatchConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn check_grid(&self, g: &ScanGrid) -> Result<()> {
        if !g.spec().compatible(&self.spec, 1e-6) {
            return Err(Error::Shape(format!(
                "scan grid (n={}, delta={}) does not match the matcher (n={}, delta={})",
                g.spec().n(),
                g.spec().delta(),
                self.spec.n(),
                self.spec.delta()
            )));
        }
        Ok(())
    }

    /// Band-passed magnitude spectrum of the windowed grid, in polar form.
    pub fn polar_spectrum(&self, g: &ScanGrid) -> Result<Array2<f64>> {
        self.check_grid(g)?;
        let windowed = hadamard(g.values(), &self.hann);
        let spectrum = dft2(&windowed)?.filtered(&self.band)?;
        cart2pol(&magnitude(&spectrum), self.polar)
    }

    pub fn estimate_rotation(&self, f: &ScanGrid, g: &ScanGrid) -> Result<RotationEstimate> {
        if self.cfg.n_theta == 1 {
            return self.single_candidate(f, g);
        }
        let pad = self.cfg.pad_angle();
        let pf = wrap_pad(&self.polar_spectrum(f)?, pad)?;
        let pg = wrap_pad(&self.polar_spectrum(g)?, pad)?;
        let c = xcorr_with(&pf, &pg, self.kernel)?;

        // Mean over radial lags, then drop the lags introduced by padding.
        let profile: Vec<f64> = c
            .rows()
            .into_iter()
            .map(|row| row.mean().unwrap_or(0.0))
            .collect();
        let n_angle = self.cfg.n_theta;
        let start = profile.len() / 2 - n_angle / 2;
        let scores = profile[start..start + n_angle].to_vec();

        let surface = CorrelationSurface::from_1d(scores, self.cfg.theta_grid())?;
        let peak = SoftArgmax::new(self.cfg.t_theta, self.cfg.softargmax_window)
            .with_normalization(self.cfg.score_normalization)
            .locate(&surface);
        Ok(RotationEstimate {
            theta: peak.col,
            surface,
            peak,
        })
    }

    /// With one rotation candidate there is nothing to search: the polar
    /// stage is skipped and the surface holds a single zero score.
    fn single_candidate(&self, f: &ScanGrid, g: &ScanGrid) -> Result<RotationEstimate> {
        self.check_grid(f)?;
        self.check_grid(g)?;
        let surface = CorrelationSurface::from_1d(vec![0.0], self.cfg.theta_grid())?;
        let peak = SoftArgmax::new(self.cfg.t_theta, self.cfg.softargmax_window).locate(&surface);
        Ok(RotationEstimate {
            theta: peak.col,
            surface,
            peak,
        })
    }

    pub fn estimate_translation(
        &self,
        f: &ScanGrid,
        g: &ScanGrid,
        theta: f64,
    ) -> Result<TranslationEstimate> {
        self.check_grid(f)?;
        self.check_grid(g)?;
        let n_pad = self.cfg.padded_len();
        let g_rot = rotate_array(g.values(), -theta);
        let fp = zero_pad_array(f.values(), n_pad)?;
        let gp = zero_pad_array(&g_rot, n_pad)?;
        let c = xcorr_with(&fp, &gp, self.kernel)?;
        let delta = self.cfg.delta_xy;
        let surface = CorrelationSurface::centred_lags(c, delta, delta)?;
        let peak = SoftArgmax::new(self.cfg.t_xy, self.cfg.softargmax_window)
            .with_normalization(self.cfg.score_normalization)
            .locate(&surface);
        // Row lags point towards -y.
        let shift = [peak.col, -peak.row];
        Ok(TranslationEstimate {
            translation: rotate_vec(theta, shift),
            surface,
            peak,
        })
    }

    pub fn scan_match(
        &self,
        f: &ScanGrid,
        g: &ScanGrid,
        masks: Option<(&MaskGrid, &MaskGrid)>,
    ) -> Result<MatchResult> {
        self.check_grid(f)?;
        self.check_grid(g)?;
        let (f, g) = match masks {
            Some((mf, mg)) => (apply_mask(f, mf)?, apply_mask(g, mg)?),
            None => (f.clone(), g.clone()),
        };
        let rotation = self.estimate_rotation(&f, &g)?;
        let translation = self.estimate_translation(&f, &g, rotation.theta)?;

        let (hr, hc) = translation.surface.coords_at(translation.peak.hard_index);
        let diagnostics = Diagnostics {
            theta_peak_value: rotation.peak.hard_value,
            theta_hard: rotation.surface.coords_at(rotation.peak.hard_index).1,
            xy_peak_value: translation.peak.hard_value,
            xy_hard: [hc, -hr],
        };
        let [tx, ty] = translation.translation;
        Ok(MatchResult {
            pose: Pose2D::new(rotation.theta, tx, ty),
            theta_surface: rotation.surface,
            xy_surface: translation.surface,
            diagnostics,
        })
    }
}

/// One-shot convenience wrapper around [`Matcher`].
pub fn scan_match(
    f: &ScanGrid,
    g: &ScanGrid,
    cfg: &MatchConfig,
    masks: Option<(&MaskGrid, &MaskGrid)>,
) -> Result<MatchResult> {
    Matcher::new(cfg.clone())?.scan_match(f, g, masks)
}

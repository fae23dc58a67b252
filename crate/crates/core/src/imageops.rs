//! Real-grid manipulations used by the scan matcher: windowing, band-pass
//! masking, bilinear rotation, Cartesian-to-polar resampling, padding and
//! Hadamard masking.
//!
//! All resamplers are bilinear and treat samples outside the source array as
//! zero.

use ndarray::{s, Array2, Zip};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// A square power grid with its physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    spec: GridSpec,
    values: Array2<f64>,
}

impl ScanGrid {
    /// Fails if `values` is not `n x n` or holds a non-finite value.
    pub fn new(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        check_shape(&spec, &values)?;
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} at cell ({r}, {c})"
            )));
        }
        Ok(ScanGrid { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        ScanGrid {
            values: Array2::zeros((spec.n(), spec.n())),
            spec,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    // Values produced by this module from finite inputs stay finite.
    pub(crate) fn from_parts(spec: GridSpec, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), (spec.n(), spec.n()));
        ScanGrid { spec, values }
    }
}

/// Per-cell weights in `[0, 1]` applied to a scan before matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    spec: GridSpec,
    values: Array2<f64>,
}

impl MaskGrid {
    pub fn new(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        check_shape(&spec, &values)?;
        if let Some(((r, c), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "mask value {v} at cell ({r}, {c}) outside [0, 1]"
            )));
        }
        Ok(MaskGrid { spec, values })
    }

    pub fn ones(spec: GridSpec) -> Self {
        MaskGrid {
            values: Array2::ones((spec.n(), spec.n())),
            spec,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

fn check_shape(spec: &GridSpec, values: &Array2<f64>) -> Result<()> {
    let n = spec.n();
    if values.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "expected a {n}x{n} grid, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    Ok(())
}

/// Symmetric Hann taper of length `n`: zero at both ends, one at the centre
/// for odd `n`.
pub fn hann_1d(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect()
}

/// Separable 2D Hann window `w(i) w(j)`.
pub fn hanning_window(spec: GridSpec) -> ScanGrid {
    let w = hann_1d(spec.n());
    let values = Array2::from_shape_fn((spec.n(), spec.n()), |(r, c)| w[r] * w[c]);
    ScanGrid::from_parts(spec, values)
}

/// Hard annular mask over a centred (DC-at-centre) `n x n` frequency layout.
///
/// A bin passes when its radial frequency, as a fraction of Nyquist, lies in
/// `[r_lo, r_hi]`. Nyquist sits at `n / 2` bins from DC, so the corners of the
/// layout fall outside the full band `[0, 1]`.
pub fn bandpass_mask(n: usize, r_lo: f64, r_hi: f64) -> Result<Array2<f64>> {
    if !(r_lo.is_finite() && r_hi.is_finite() && 0.0 <= r_lo && r_lo < r_hi && r_hi <= 1.0) {
        return Err(Error::Config(format!(
            "band-pass limits must satisfy 0 <= lo < hi <= 1, got [{r_lo}, {r_hi}]"
        )));
    }
    let dc = (n / 2) as f64;
    let nyquist = n as f64 / 2.0;
    Ok(Array2::from_shape_fn((n, n), |(r, c)| {
        let u = c as f64 - dc;
        let v = dc - r as f64;
        let rho = u.hypot(v) / nyquist;
        if rho >= r_lo && rho <= r_hi {
            1.0
        } else {
            0.0
        }
    }))
}

/// Bilinear sample at fractional `(row, col)`; neighbours outside are zero.
#[inline]
pub(crate) fn sample_bilinear(a: &Array2<f64>, row: f64, col: f64) -> f64 {
    let (rows, cols) = a.dim();
    if !(row > -1.0 && col > -1.0 && row < rows as f64 && col < cols as f64) {
        return 0.0;
    }
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            a[[r as usize, c as usize]]
        }
    };
    let top = (1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1);
    let bottom = (1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1);
    (1.0 - fr) * top + fr * bottom
}

/// Rotates a square array counter-clockwise by `theta` about its centre cell:
/// `out(x) = a(R(-theta) x)` in the y-up frame.
pub fn rotate_array(a: &Array2<f64>, theta: f64) -> Array2<f64> {
    let (rows, cols) = a.dim();
    let cr = (rows / 2) as f64;
    let cc = (cols / 2) as f64;
    let (s, c) = theta.sin_cos();
    Array2::from_shape_fn((rows, cols), |(r, col)| {
        let x = col as f64 - cc;
        let y = cr - r as f64;
        let sx = c * x + s * y;
        let sy = -s * x + c * y;
        sample_bilinear(a, cr - sy, cc + sx)
    })
}

/// Rotates a scan counter-clockwise by `theta` radians about the grid centre.
pub fn rotate_bilinear(g: &ScanGrid, theta: f64) -> ScanGrid {
    ScanGrid::from_parts(g.spec, rotate_array(&g.values, theta))
}

/// Exact counter-clockwise quarter turn of a square array (y-up frame).
pub fn rot90(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "rot90 needs a square array");
    Array2::from_shape_fn((n, n), |(r, c)| a[[c, n - 1 - r]])
}

/// Circular shift: `out[(r + dr) mod rows, (c + dc) mod cols] = a[r, c]`.
pub fn circular_shift(a: &Array2<f64>, dr: isize, dc: isize) -> Array2<f64> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let sr = (r as isize - dr).rem_euclid(rows as isize) as usize;
        let sc = (c as isize - dc).rem_euclid(cols as isize) as usize;
        a[[sr, sc]]
    })
}

/// Polar sampling geometry for [`cart2pol`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid {
    pub n_angle: usize,
    pub n_radius: usize,
    /// Total angular coverage; samples span `[-span/2, span/2)`.
    pub angle_span: f64,
}

impl PolarGrid {
    pub fn angles(&self) -> Vec<f64> {
        let step = self.angle_span / self.n_angle as f64;
        (0..self.n_angle)
            .map(|i| -0.5 * self.angle_span + i as f64 * step)
            .collect()
    }

    /// Radii in bins for a centred `n x n` source: `(0, R]` with `R` the
    /// largest in-extent radius along the axes.
    pub fn radii(&self, n: usize) -> Vec<f64> {
        let max_r = ((n - 1) / 2) as f64;
        (1..=self.n_radius)
            .map(|j| j as f64 * max_r / self.n_radius as f64)
            .collect()
    }
}

/// Resamples a centred square array onto an `(angle x radius)` grid.
///
/// Angle is measured counter-clockwise from +u (columns) towards +v (up).
pub fn cart2pol(a: &Array2<f64>, polar: PolarGrid) -> Result<Array2<f64>> {
    if polar.n_angle < 2 || polar.n_radius < 2 {
        return Err(Error::Config(format!(
            "polar grid needs at least 2 angles and 2 radii, got {}x{}",
            polar.n_angle, polar.n_radius
        )));
    }
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!(
            "cart2pol needs a square array, got {:?}",
            a.dim()
        )));
    }
    let centre = (n / 2) as f64;
    let radii = polar.radii(n);
    let trig: Vec<(f64, f64)> = polar.angles().into_iter().map(f64::sin_cos).collect();
    Ok(Array2::from_shape_fn(
        (polar.n_angle, polar.n_radius),
        |(i, j)| {
            let (s, c) = trig[i];
            let rho = radii[j];
            sample_bilinear(a, centre - rho * s, centre + rho * c)
        },
    ))
}

/// Extends the angle axis (rows) with `pad` circularly wrapped rows on each
/// side and zero-pads the radius axis (columns) by the same count.
pub fn wrap_pad(p: &Array2<f64>, pad: usize) -> Result<Array2<f64>> {
    let (n_angle, n_radius) = p.dim();
    if pad >= n_angle {
        return Err(Error::Config(format!(
            "angular padding {pad} must be smaller than the {n_angle} angle bins"
        )));
    }
    let mut out = Array2::zeros((n_angle + 2 * pad, n_radius + 2 * pad));
    for i in 0..n_angle + 2 * pad {
        let src = (i as isize - pad as isize).rem_euclid(n_angle as isize) as usize;
        out.slice_mut(s![i, pad..pad + n_radius])
            .assign(&p.row(src));
    }
    Ok(out)
}

/// Inverse of [`wrap_pad`]: drops `pad` rows and columns on every side.
pub fn crop_pad(p: &Array2<f64>, pad: usize) -> Array2<f64> {
    let (rows, cols) = p.dim();
    p.slice(s![pad..rows - pad, pad..cols - pad]).to_owned()
}

/// Places `a` in the middle of a zero `out_n x out_n` array. The top-left
/// offset is `(out_n - n) / 2`, rounded down.
pub fn zero_pad_array(a: &Array2<f64>, out_n: usize) -> Result<Array2<f64>> {
    let (rows, cols) = a.dim();
    if out_n < rows || out_n < cols {
        return Err(Error::Shape(format!(
            "cannot zero-pad a {rows}x{cols} array down to {out_n}x{out_n}"
        )));
    }
    let r0 = (out_n - rows) / 2;
    let c0 = (out_n - cols) / 2;
    let mut out = Array2::zeros((out_n, out_n));
    out.slice_mut(s![r0..r0 + rows, c0..c0 + cols]).assign(a);
    Ok(out)
}

pub fn zero_pad(g: &ScanGrid, out_n: usize) -> Result<Array2<f64>> {
    zero_pad_array(&g.values, out_n)
}

/// Hadamard product of a scan and a mask on the same grid.
pub fn apply_mask(f: &ScanGrid, m: &MaskGrid) -> Result<ScanGrid> {
    if !f.spec.compatible(&m.spec, 1e-6) {
        return Err(Error::Shape(format!(
            "mask grid {:?} does not match scan grid {:?}",
            m.spec, f.spec
        )));
    }
    let mut values = f.values.clone();
    Zip::from(&mut values)
        .and(&m.values)
        .for_each(|v, &w| *v *= w);
    Ok(ScanGrid::from_parts(f.spec, values))
}

/// Elementwise product of two equally shaped arrays.
pub(crate) fn hadamard(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    debug_assert_eq!(a.dim(), b.dim());
    a * b
}

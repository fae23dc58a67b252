//! SE(2) poses and the grid coordinate conventions shared by every module.
//!
//! World frame: x to the right, y up, positive angles counter-clockwise.
//! Grids are stored row-major with the row index increasing towards -y and
//! the column index increasing towards +x. The centre cell of an (odd-sized)
//! grid sits at world (0, 0).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Rotates `v` counter-clockwise by `theta`.
#[inline]
pub fn rotate_vec(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rigid SE(2) transform acting on points as `x -> R(theta) x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Pose2D {
    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Pose2D {
            theta: normalize_angle(theta),
            tx,
            ty,
        }
    }

    pub const fn identity() -> Self {
        Pose2D {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.tx, self.ty]
    }

    /// SE(2) product `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let [x, y] = rotate_vec(self.theta, other.translation());
        Pose2D::new(self.theta + other.theta, self.tx + x, self.ty + y)
    }

    pub fn inverse(&self) -> Pose2D {
        let [x, y] = rotate_vec(-self.theta, self.translation());
        Pose2D::new(-self.theta, -x, -y)
    }

    /// Maps a point: `R(theta) p + t`.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = rotate_vec(self.theta, p);
        [x + self.tx, y + self.ty]
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Pose2D::identity()
    }
}

/// Formats as the CSV row `theta,tx,ty` using shortest round-trip decimals.
impl fmt::Display for Pose2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?},{:?},{:?}", self.theta, self.tx, self.ty)
    }
}

impl FromStr for Pose2D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.trim().split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "pose row needs 3 fields `theta,tx,ty`, got {}",
                fields.len()
            )));
        }
        let mut values = [0.0; 3];
        for (value, field) in values.iter_mut().zip(&fields) {
            *value = field
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad pose field {field:?}: {e}")))?;
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite pose field {field:?}"
                )));
            }
        }
        Ok(Pose2D::new(values[0], values[1], values[2]))
    }
}

/// Square grid geometry: `n` cells per side (odd), `delta` metres per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    delta: f64,
}

impl GridSpec {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n == 0 || n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid size must be a positive odd integer, got {n}"
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {delta}"
            )));
        }
        Ok(GridSpec { n, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Index of the centre cell along either axis.
    pub fn centre(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.delta
    }

    /// Cell-centre coordinates along one axis, increasing with index.
    pub fn axis(&self) -> Vec<f64> {
        let c = self.centre() as f64;
        (0..self.n).map(|i| (i as f64 - c) * self.delta).collect()
    }

    /// World coordinates of the centre of cell `(row, col)`.
    pub fn cell_to_world(&self, row: usize, col: usize) -> [f64; 2] {
        let c = self.centre() as f64;
        [(col as f64 - c) * self.delta, (c - row as f64) * self.delta]
    }

    /// Fractional `(row, col)` of a world point.
    pub fn world_to_cell(&self, p: [f64; 2]) -> (f64, f64) {
        let c = self.centre() as f64;
        (c - p[1] / self.delta, c + p[0] / self.delta)
    }

    /// Same cell count with cell sizes equal to within `rel_tol`.
    pub fn compatible(&self, other: &GridSpec, rel_tol: f64) -> bool {
        self.n == other.n
            && ((self.delta - other.delta).abs() <= rel_tol * self.delta.max(other.delta))
    }
}

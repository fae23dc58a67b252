//! 2D discrete Fourier transforms, magnitude spectra and FFT-based circular
//! cross-correlation.
//!
//! Forward transforms are unnormalized; inverse transforms scale by
//! `1 / (rows * cols)`. Spectra are stored in the centred layout (DC at
//! index `(rows / 2, cols / 2)`), rows pointing towards -v as in the spatial
//! grids.

use std::cell::RefCell;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    // Reused between calls: (FFT scratch, transpose buffer).
    static WORK: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// In-place 2D FFT of a row-major `rows x cols` buffer.
pub(crate) fn fft2_in_place(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), rows * cols);
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            (p.plan_fft_inverse(cols), p.plan_fft_inverse(rows))
        } else {
            (p.plan_fft_forward(cols), p.plan_fft_forward(rows))
        }
    });
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    WORK.with(|w| {
        let (scratch, transposed) = &mut *w.borrow_mut();
        scratch.resize(scratch_len, Complex64::default());
        transposed.resize(rows * cols, Complex64::default());
        row_fft.process_with_scratch(buf, scratch);
        transpose(buf, transposed, rows, cols);
        col_fft.process_with_scratch(transposed, scratch);
        transpose(transposed, buf, cols, rows);
    });

    if inverse {
        let scale = 1.0 / (rows * cols) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Moves index 0 to `len / 2` on both axes.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        a[[(r + rows - rows / 2) % rows, (c + cols - cols / 2) % cols]].clone()
    })
}

/// Inverse of [`fftshift`].
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        a[[(r + rows / 2) % rows, (c + cols / 2) % cols]].clone()
    })
}

fn forward_raw(a: &Array2<f64>) -> Vec<Complex64> {
    let (rows, cols) = a.dim();
    let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, rows, cols, false);
    buf
}

/// Complex 2D DFT in centred layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Array2<Complex64>,
}

impl Spectrum {
    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Real part of the inverse transform.
    pub fn inverse(&self) -> Array2<f64> {
        let (rows, cols) = self.values.dim();
        let mut buf = ifftshift(&self.values).into_raw_vec_and_offset().0;
        fft2_in_place(&mut buf, rows, cols, true);
        Array2::from_shape_vec((rows, cols), buf.into_iter().map(|v| v.re).collect())
            .expect("buffer length matches shape")
    }

    /// Multiplies every bin by a real weight in the same centred layout.
    pub fn filtered(&self, weights: &Array2<f64>) -> Result<Spectrum> {
        if weights.dim() != self.values.dim() {
            return Err(Error::Shape(format!(
                "filter {:?} does not match spectrum {:?}",
                weights.dim(),
                self.values.dim()
            )));
        }
        Ok(Spectrum {
            values: &self.values * &weights.mapv(|w| Complex64::new(w, 0.0)),
        })
    }
}

/// Forward 2D DFT, re-centred so DC sits at `(rows / 2, cols / 2)`.
pub fn dft2(g: &Array2<f64>) -> Result<Spectrum> {
    let (rows, cols) = g.dim();
    if rows < 2 || cols < 2 {
        return Err(Error::Shape(format!(
            "dft2 needs at least 2x2, got {rows}x{cols}"
        )));
    }
    let raw =
        Array2::from_shape_vec((rows, cols), forward_raw(g)).expect("buffer length matches shape");
    Ok(Spectrum {
        values: fftshift(&raw),
    })
}

/// Elementwise complex modulus.
pub fn magnitude(s: &Spectrum) -> Array2<f64> {
    s.values.mapv(|v| v.norm())
}

/// Frequency-domain product used by [`xcorr_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationKernel {
    /// `conj(A) * B`: cross-correlation.
    #[default]
    Correlation,
    /// `A * B` without conjugation: convolution. Only useful for fault
    /// injection in the verification suites.
    Convolution,
}

/// Scores over a regular grid of candidate coordinates.
///
/// One-dimensional surfaces have a single row whose coordinate is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    scores: Array2<f64>,
    row_coords: Vec<f64>,
    col_coords: Vec<f64>,
}

impl CorrelationSurface {
    pub fn new(scores: Array2<f64>, row_coords: Vec<f64>, col_coords: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Shape("empty correlation surface".into()));
        }
        if scores.dim() != (row_coords.len(), col_coords.len()) {
            return Err(Error::Shape(format!(
                "surface {:?} needs {}x{} coordinates, got {}x{}",
                scores.dim(),
                scores.nrows(),
                scores.ncols(),
                row_coords.len(),
                col_coords.len()
            )));
        }
        for axis in [&row_coords, &col_coords] {
            if axis
                .windows(2)
                .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
            {
                return Err(Error::InvalidInput(
                    "surface coordinates must strictly increase".into(),
                ));
            }
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite correlation score".into()));
        }
        Ok(CorrelationSurface {
            scores,
            row_coords,
            col_coords,
        })
    }

    pub fn from_1d(scores: Vec<f64>, coords: Vec<f64>) -> Result<Self> {
        let n = scores.len();
        let scores = Array2::from_shape_vec((1, n), scores).expect("1 x n");
        Self::new(scores, vec![0.0], coords)
    }

    /// Surface with lag coordinates `(i - len / 2) * step` on each axis.
    pub fn centred_lags(scores: Array2<f64>, row_step: f64, col_step: f64) -> Result<Self> {
        let (rows, cols) = scores.dim();
        let row_coords = lag_axis(rows, row_step);
        let col_coords = lag_axis(cols, col_step);
        Self::new(scores, row_coords, col_coords)
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn row_coords(&self) -> &[f64] {
        &self.row_coords
    }

    pub fn col_coords(&self) -> &[f64] {
        &self.col_coords
    }

    pub fn is_1d(&self) -> bool {
        self.scores.nrows() == 1
    }

    /// Hard argmax; the lowest row-major index wins ties.
    pub fn argmax(&self) -> ((usize, usize), f64) {
        let mut best = ((0, 0), f64::NEG_INFINITY);
        for (idx, &v) in self.scores.indexed_iter() {
            if v > best.1 {
                best = (idx, v);
            }
        }
        best
    }

    pub fn coords_at(&self, idx: (usize, usize)) -> (f64, f64) {
        (self.row_coords[idx.0], self.col_coords[idx.1])
    }
}

fn lag_axis(len: usize, step: f64) -> Vec<f64> {
    let mid = (len / 2) as isize;
    (0..len).map(|i| (i as isize - mid) as f64 * step).collect()
}

/// Circular cross-correlation `c[k] = sum_x a[x] b[x + k]`, centred so zero
/// lag sits at `(rows / 2, cols / 2)`.
pub fn xcorr(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    xcorr_with(a, b, CorrelationKernel::Correlation)
}

pub fn xcorr_with(
    a: &Array2<f64>,
    b: &Array2<f64>,
    kernel: CorrelationKernel,
) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cannot correlate {:?} with {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let fa = forward_raw(a);
    xcorr_prepared(&fa, b, kernel)
}

/// Correlation against a first operand that is already transformed
/// (uncentred layout). Lets callers reuse one transform across many
/// second operands.
pub(crate) fn xcorr_prepared(
    fa: &[Complex64],
    b: &Array2<f64>,
    kernel: CorrelationKernel,
) -> Result<Array2<f64>> {
    let (rows, cols) = b.dim();
    if fa.len() != rows * cols {
        return Err(Error::Shape(
            "prepared transform does not match operand".into(),
        ));
    }
    let mut buf = forward_raw(b);
    match kernel {
        CorrelationKernel::Correlation => buf.iter_mut().zip(fa).for_each(|(v, a)| *v *= a.conj()),
        CorrelationKernel::Convolution => buf.iter_mut().zip(fa).for_each(|(v, a)| *v *= a),
    }
    fft2_in_place(&mut buf, rows, cols, true);
    let raw = Array2::from_shape_vec((rows, cols), buf.into_iter().map(|v| v.re).collect())
        .expect("buffer length matches shape");
    Ok(fftshift(&raw))
}

pub(crate) fn forward_transform(a: &Array2<f64>) -> Vec<Complex64> {
    forward_raw(a)
}

/// Smallest integer `>= n` whose only prime factors are 2, 3, 5 and 7.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

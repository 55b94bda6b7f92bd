//! 2D discrete Fourier transform with a fixed convention.
//!
//! Forward transform is unnormalized, inverse carries `1/(MN)`, so
//! `<f, g> = (1/(MN)) <F, G>`. Spectra are stored in standard FFT order; use
//! [`signed_frequency`] / [`FrequencyLattice`] to get centered integer
//! frequencies.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::Raster;

/// Signed integer frequency of storage index `p` on an axis of length `n`,
/// in `[-floor(n/2), ceil(n/2) - 1]`.
#[inline]
pub fn signed_frequency(p: usize, n: usize) -> i64 {
    if p < n.div_ceil(2) {
        p as i64
    } else {
        p as i64 - n as i64
    }
}

/// Storage index of signed frequency `w` on an axis of length `n`.
#[inline]
pub fn storage_index(w: i64, n: usize) -> usize {
    w.rem_euclid(n as i64) as usize
}

/// Centered per-axis frequency indexing for an `width x height` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyLattice {
    pub width: usize,
    pub height: usize,
}

impl FrequencyLattice {
    pub fn new(width: usize, height: usize) -> Self {
        FrequencyLattice { width, height }
    }

    /// `(w1, w2)` for storage position `(px, py)`.
    #[inline]
    pub fn frequency(&self, px: usize, py: usize) -> (i64, i64) {
        (
            signed_frequency(px, self.width),
            signed_frequency(py, self.height),
        )
    }

    pub fn range_x(&self) -> (i64, i64) {
        axis_range(self.width)
    }

    pub fn range_y(&self) -> (i64, i64) {
        axis_range(self.height)
    }
}

fn axis_range(n: usize) -> (i64, i64) {
    (-((n / 2) as i64), n.div_ceil(2) as i64 - 1)
}

/// Complex spectrum in standard FFT storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                got: (data.len(), 1),
            });
        }
        Ok(Spectrum {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, px: usize, py: usize) -> Complex64 {
        self.data[py * self.width + px]
    }
}

/// Reusable row/column plans for one lattice size.
#[derive(Clone)]
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        rows.process(data);
        let mut t = transpose(data, w, h);
        cols.process(&mut t);
        let back = transpose(&t, h, w);
        data.copy_from_slice(&back);
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.width * self.height);
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1/(MN)` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.width * self.height);
        self.run(data, &self.row_inv, &self.col_inv);
        let norm = 1.0 / (self.width * self.height) as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    pub fn forward_real(&self, raster: &Raster) -> Result<Spectrum> {
        if raster.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                got: raster.dims(),
            });
        }
        let mut data: Vec<Complex64> = raster
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.forward(&mut data);
        Spectrum::new(self.width, self.height, data)
    }
}

fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

pub fn dft2(raster: &Raster) -> Spectrum {
    let (w, h) = raster.dims();
    Fft2::new(w, h)
        .forward_real(raster)
        .expect("plan built for raster size")
}

/// Full complex inverse transform.
pub fn idft2(spec: &Spectrum) -> Vec<Complex64> {
    let mut data = spec.data.clone();
    Fft2::new(spec.width, spec.height).inverse(&mut data);
    data
}

/// Inverse transform returning the real part and the imaginary residue
/// ratio (see [`split_real`]).
pub fn idft2_real(spec: &Spectrum) -> (Vec<f64>, f64) {
    let bound = sup_bound(&spec.data);
    split_real(idft2(spec), bound)
}

/// `sum |X| / (M N)`: an upper bound on the sup-norm of the inverse transform.
pub(crate) fn sup_bound(spec: &[Complex64]) -> f64 {
    spec.iter().map(|c| c.norm()).sum::<f64>() / spec.len().max(1) as f64
}

/// Real part plus `max|Im| / max(max|Re|, bound)`, where `bound` bounds the
/// sup-norm the output could reach. Normalizing by the bound as well keeps
/// rounding noise in near-empty outputs from reading as a large residue.
/// Zero when both vanish.
pub(crate) fn split_real(data: Vec<Complex64>, bound: f64) -> (Vec<f64>, f64) {
    let mut max_re = 0.0_f64;
    let mut max_im = 0.0_f64;
    let re = data
        .iter()
        .map(|c| {
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
            c.re
        })
        .collect();
    let denom = max_re.max(bound);
    let ratio = if denom > 0.0 { max_im / denom } else { 0.0 };
    (re, ratio)
}

/// Inverse transform to a real raster; fails when the imaginary residue is
/// not negligible (`> 1e-8` relative), which means the spectrum was not
/// Hermitian.
pub fn idft2_to_raster(spec: &Spectrum) -> Result<Raster> {
    let (re, ratio) = idft2_real(spec);
    if ratio > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "spectrum is not Hermitian (imaginary residue {ratio:e})"
        )));
    }
    Raster::new(spec.width, spec.height, re)
}

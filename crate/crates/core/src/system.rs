//! Cone-adapted digital shearlet filter bank, built and applied entirely in
//! the Fourier domain.
//!
//! Scale `j` (0 = coarsest) has `4 * floor(2^(j/2))` shearlets enumerated
//! counter-clockwise by an index `k`. Each filter is
//!
//! ```text
//! 2^(-3j/4) * psi1(a_j * nu_d) * w(L_j * r + i) * chi_cone
//! ```
//!
//! where `nu_d` is the dominant normalized frequency of the cone (cycles per
//! pixel), `r` the signed ratio minor/dominant, `L_j = floor(2^(j/2))` and
//! `a_j = 2^(j0 - j)` the pixel scale of the band.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{signed_frequency, split_real, sup_bound, Fft2, Spectrum};
use crate::image::Raster;

/// Tolerance on the imaginary residue of each inverse-transformed band,
/// relative to the band's largest possible output.
pub const REALNESS_TOLERANCE: f64 = 1e-8;

/// Mexican-hat wavelet in frequency: `w^2 exp(-2 pi^2 w^2)`.
#[inline]
pub fn psi1_hat(w: f64) -> f64 {
    let w2 = w * w;
    w2 * (-2.0 * PI * PI * w2).exp()
}

/// Smooth step: 0 below 0, 1 above 1, `35x^4 - 84x^5 + 70x^6 - 20x^7` between.
#[inline]
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let x4 = x * x * x * x;
        x4 * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
    }
}

/// Compactly supported bump on `[-1, 1]` with `psi2(0) = 1`.
///
/// Its squared shifts form a partition of unity: `sum_i psi2(w + i)^2 = 1`.
#[inline]
pub fn psi2_hat(w: f64) -> f64 {
    bump_squared(w).sqrt()
}

#[inline]
fn bump_squared(w: f64) -> f64 {
    if w <= 0.0 {
        smooth_step(1.0 + w)
    } else {
        smooth_step(1.0 - w)
    }
}

/// Angular window used along the shearing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngularWindow {
    /// `psi2^2`: unit-spaced shifts sum to exactly one, so summing a scale's
    /// coefficients over all shearings gives a direction-independent response.
    #[default]
    PartitionOfUnity,
    /// `psi2` itself: shifts are orthonormal in the squared sense (Parseval
    /// frame), but their plain sum ripples between 1 and sqrt(2).
    Parseval,
}

impl AngularWindow {
    #[inline]
    pub fn eval(self, w: f64) -> f64 {
        match self {
            AngularWindow::PartitionOfUnity => bump_squared(w),
            AngularWindow::Parseval => psi2_hat(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cone {
    Horizontal,
    Vertical,
}

impl Cone {
    pub fn tag(self) -> char {
        match self {
            Cone::Horizontal => 'h',
            Cone::Vertical => 'v',
        }
    }
}

/// Cone plus raw shear parameter `i`, `|i| <= floor(2^(j/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shearing {
    pub cone: Cone,
    pub shear: i64,
}

/// `floor(2^(j/2))`, exact.
pub fn shear_levels(j: usize) -> usize {
    let v = 1u128 << j;
    // integer square root
    let mut r = (v as f64).sqrt() as u128;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r as usize
}

/// Number of shearlets at scale `j`: `4 * floor(2^(j/2))`.
pub fn shear_count(j: usize) -> usize {
    4 * shear_levels(j)
}

/// Counter-clockwise enumeration of the shearings of scale `j`, position = `k`.
///
/// Horizontal `i = 0, -1, ..., -L`, then vertical `i = -L+1, ..., L`, then
/// horizontal `i = L-1, ..., 1`. The seams `(h, -L)` and `(v, L)` stand for
/// the glued diagonal shearlets.
pub fn shearing_sequence(j: usize) -> Vec<Shearing> {
    let l = shear_levels(j) as i64;
    let mut out = Vec::with_capacity(4 * l as usize);
    for i in (-l..=0).rev() {
        out.push(Shearing {
            cone: Cone::Horizontal,
            shear: i,
        });
    }
    for i in (-l + 1)..=l {
        out.push(Shearing {
            cone: Cone::Vertical,
            shear: i,
        });
    }
    for i in (1..l).rev() {
        out.push(Shearing {
            cone: Cone::Horizontal,
            shear: i,
        });
    }
    out
}

/// Bijection between `k` and `(cone, i)` for one scale.
#[derive(Debug, Clone)]
pub struct ShearingIndexMap {
    j: usize,
    seq: Vec<Shearing>,
}

impl ShearingIndexMap {
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    pub fn shearing(&self, k: usize) -> Result<Shearing> {
        self.seq.get(k).copied().ok_or(Error::ShearingOutOfRange {
            j: self.j,
            k,
            count: self.seq.len(),
        })
    }

    pub fn index_of(&self, s: Shearing) -> Option<usize> {
        self.seq.iter().position(|&t| t == s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Shearing)> + '_ {
        self.seq.iter().copied().enumerate()
    }
}

/// Index map for scale `j` of a system with `j0` scales.
pub fn shearing_index_map(j: usize, j0: usize) -> Result<ShearingIndexMap> {
    if j >= j0 {
        return Err(Error::ScaleOutOfRange { j, j0 });
    }
    Ok(ShearingIndexMap {
        j,
        seq: shearing_sequence(j),
    })
}

/// `theta_k = pi (1 - k / (4 floor(2^(j/2))))`, in `(0, pi]`.
pub fn orientation_of(j: usize, k: usize) -> Result<f64> {
    let count = shear_count(j);
    if k >= count {
        return Err(Error::ShearingOutOfRange { j, k, count });
    }
    Ok(PI * (1.0 - k as f64 / count as f64))
}

/// Valid `j0` range for a lattice: `2 ..= floor(log2(min(M, N))) - 2`.
pub fn j0_range(width: usize, height: usize) -> (usize, usize) {
    let m = width.min(height).max(1);
    let log2 = (usize::BITS - 1 - m.leading_zeros()) as usize;
    (2, log2.saturating_sub(2))
}

/// `floor(log2(min(M, N))) - 3`, clamped into the valid range.
pub fn default_j0(width: usize, height: usize) -> usize {
    let (lo, hi) = j0_range(width, height);
    (hi.saturating_sub(1)).clamp(lo, hi.max(lo))
}

/// Pixel scale of band `j`: `2^(j0 - j)`.
#[inline]
pub fn pixel_scale(j0: usize, j: f64) -> f64 {
    (j0 as f64 - j).exp2()
}

#[derive(Debug, Clone)]
pub struct Band {
    pub j: usize,
    pub k: usize,
    pub shearing: Shearing,
    pub theta: f64,
    /// Real filter in FFT storage order.
    pub filter: Vec<f64>,
}

/// Dimensions and per-scale band counts shared by a system and everything it
/// produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLayout {
    pub width: usize,
    pub height: usize,
    pub j0: usize,
    /// First band index of each scale; one extra entry holds the total.
    pub offsets: Vec<usize>,
}

impl SystemLayout {
    pub fn new(width: usize, height: usize, j0: usize) -> Self {
        let mut offsets = vec![0];
        for j in 0..j0 {
            offsets.push(offsets[j] + shear_count(j));
        }
        SystemLayout {
            width,
            height,
            j0,
            offsets,
        }
    }

    pub fn band_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn shear_count(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn band_index(&self, j: usize, k: usize) -> Result<usize> {
        if j >= self.j0 {
            return Err(Error::ScaleOutOfRange { j, j0: self.j0 });
        }
        let count = self.shear_count(j);
        if k >= count {
            return Err(Error::ShearingOutOfRange { j, k, count });
        }
        Ok(self.offsets[j] + k)
    }
}

/// Precomputed frequency-domain filter bank for one image size.
#[derive(Debug, Clone)]
pub struct ShearletSystem {
    layout: SystemLayout,
    window: AngularWindow,
    bands: Vec<Band>,
    fft: Fft2,
}

impl ShearletSystem {
    /// Builds the bank with the default angular window.
    pub fn new(width: usize, height: usize, j0: usize) -> Result<Self> {
        Self::with_window(width, height, j0, AngularWindow::default())
    }

    pub fn with_default_scales(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, default_j0(width, height))
    }

    pub fn with_window(
        width: usize,
        height: usize,
        j0: usize,
        window: AngularWindow,
    ) -> Result<Self> {
        let (min, max) = j0_range(width, height);
        if j0 < min || j0 > max {
            return Err(Error::ScalesOutOfRange { j0, min, max });
        }
        let layout = SystemLayout::new(width, height, j0);
        let mut bands = Vec::with_capacity(layout.band_count());
        for j in 0..j0 {
            for (k, shearing) in shearing_sequence(j).into_iter().enumerate() {
                let filter = build_filter(width, height, j0, j, shearing, window);
                bands.push(Band {
                    j,
                    k,
                    shearing,
                    theta: orientation_of(j, k)?,
                    filter,
                });
            }
        }
        Ok(ShearletSystem {
            layout,
            window,
            bands,
            fft: Fft2::new(width, height),
        })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.layout.width, self.layout.height)
    }

    pub fn j0(&self) -> usize {
        self.layout.j0
    }

    pub fn window(&self) -> AngularWindow {
        self.window
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, j: usize, k: usize) -> Result<&Band> {
        Ok(&self.bands[self.layout.band_index(j, k)?])
    }

    pub fn scale_bands(&self, j: usize) -> &[Band] {
        &self.bands[self.layout.offsets[j]..self.layout.offsets[j + 1]]
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn spectrum(&self, raster: &Raster) -> Result<Spectrum> {
        self.fft.forward_real(raster)
    }

    /// Applies one real filter to a spectrum and returns the real part of the
    /// inverse transform together with its imaginary residue ratio.
    ///
    /// `input_bound` is [`input_bound`] of `spec`; the residue is measured
    /// against `input_bound * max|filter|`, the largest output the filter
    /// could produce from this input.
    pub fn apply_filter(
        &self,
        spec: &Spectrum,
        filter: &[f64],
        input_bound: f64,
    ) -> (Vec<f64>, f64) {
        let mut buf: Vec<Complex64> = spec.data.iter().zip(filter).map(|(c, &f)| c * f).collect();
        let gain = filter.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        self.fft.inverse(&mut buf);
        split_real(buf, gain * input_bound)
    }

    /// Discrete shearlet transform: one real coefficient raster per band.
    pub fn transform(&self, image: impl AsRef<Raster>) -> Result<ShearletCoefficients> {
        let raster = image.as_ref();
        let spec = self.spectrum(raster)?;
        let bound = input_bound(&spec);
        let planes: Vec<Result<Vec<f64>>> = self
            .bands
            .par_iter()
            .map(|band| {
                let (re, ratio) = self.apply_filter(&spec, &band.filter, bound);
                if ratio > REALNESS_TOLERANCE {
                    return Err(Error::ImaginaryResidue {
                        j: band.j,
                        k: band.k,
                        ratio,
                    });
                }
                Ok(re)
            })
            .collect();
        let planes = planes.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(ShearletCoefficients {
            layout: Arc::new(self.layout.clone()),
            thetas: self.bands.iter().map(|b| b.theta).collect(),
            planes,
        })
    }

    /// Worst imaginary residue over all bands, before truncation.
    pub fn max_imaginary_residue(&self, image: impl AsRef<Raster>) -> Result<f64> {
        let spec = self.spectrum(image.as_ref())?;
        let bound = input_bound(&spec);
        Ok(self
            .bands
            .par_iter()
            .map(|b| self.apply_filter(&spec, &b.filter, bound).1)
            .reduce(|| 0.0, f64::max))
    }

    /// Dumps the bank: little-endian `u32` M, N, j0, then each band's filter as
    /// `f32` in FFT storage order, bands ordered by `(j, k)`.
    pub fn write_filter_bank(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        for v in [self.layout.width, self.layout.height, self.layout.j0] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for b in &self.bands {
            for &f in &b.filter {
                buf.extend_from_slice(&(f as f32).to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// `sum_{p != 0} |X(p)| / (M N)`: bounds the sup-norm of any zero-mean
/// signal filtered from `spec` by a filter of unit peak gain.
pub fn input_bound(spec: &Spectrum) -> f64 {
    sup_bound(&spec.data[1..]) * (spec.data.len() - 1) as f64 / spec.data.len() as f64
}

/// Evaluates one (possibly glued) shearlet filter on the whole lattice.
fn build_filter(
    width: usize,
    height: usize,
    j0: usize,
    j: usize,
    shearing: Shearing,
    window: AngularWindow,
) -> Vec<f64> {
    let l = shear_levels(j) as i64;
    let a = pixel_scale(j0, j as f64);
    let norm = (-0.75 * j as f64).exp2();
    // The seam shearlets cover the diagonal from both cones.
    let glued = match shearing {
        Shearing {
            cone: Cone::Horizontal,
            shear,
        } if shear == -l => Some(Shearing {
            cone: Cone::Vertical,
            shear: -l,
        }),
        Shearing {
            cone: Cone::Vertical,
            shear,
        } if shear == l => Some(Shearing {
            cone: Cone::Horizontal,
            shear: l,
        }),
        _ => None,
    };
    let eval = |px: usize, py: usize| -> f64 {
        let w1 = signed_frequency(px, width);
        let w2 = signed_frequency(py, height);
        if w1 == 0 && w2 == 0 {
            return 0.0;
        }
        // y axis flipped so k runs counter-clockwise with y pointing up
        let nu1 = w1 as f64 / width as f64;
        let nu2 = -(w2 as f64) / height as f64;
        let (cone, dominant, ratio) = if nu2.abs() <= nu1.abs() {
            (Cone::Horizontal, nu1.abs(), nu2 / nu1)
        } else {
            (Cone::Vertical, nu2.abs(), nu1 / nu2)
        };
        let active = if cone == shearing.cone {
            Some(shearing.shear)
        } else {
            glued.filter(|g| g.cone == cone).map(|g| g.shear)
        };
        match active {
            Some(i) => norm * psi1_hat(a * dominant) * window.eval(l as f64 * ratio + i as f64),
            None => 0.0,
        }
    };
    let mut filter = vec![0.0; width * height];
    for py in 0..height {
        for px in 0..width {
            filter[py * width + px] = eval(px, py);
        }
    }
    // Nyquist rows/columns have no negated partner on even lattices;
    // symmetrize so the filter is exactly even under index negation.
    let sym = filter.clone();
    for py in 0..height {
        let qy = (height - py) % height;
        for px in 0..width {
            let qx = (width - px) % width;
            filter[py * width + px] = 0.5 * (sym[py * width + px] + sym[qy * width + qx]);
        }
    }
    filter
}

/// Real coefficient volume `SH(j, k, m)`.
#[derive(Debug, Clone)]
pub struct ShearletCoefficients {
    layout: Arc<SystemLayout>,
    thetas: Vec<f64>,
    planes: Vec<Vec<f64>>,
}

impl ShearletCoefficients {
    /// Wraps externally produced planes, one per band in `(j, k)` order.
    pub fn from_planes(layout: SystemLayout, planes: Vec<Vec<f64>>) -> Result<Self> {
        if planes.len() != layout.band_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} bands, got {}",
                layout.band_count(),
                planes.len()
            )));
        }
        let n = layout.width * layout.height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: (layout.width, layout.height),
                got: (p.len(), 1),
            });
        }
        let mut thetas = Vec::with_capacity(planes.len());
        for j in 0..layout.j0 {
            for k in 0..layout.shear_count(j) {
                thetas.push(orientation_of(j, k)?);
            }
        }
        Ok(ShearletCoefficients {
            layout: Arc::new(layout),
            thetas,
            planes,
        })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.layout.width, self.layout.height)
    }

    pub fn j0(&self) -> usize {
        self.layout.j0
    }

    pub fn shear_count(&self, j: usize) -> usize {
        self.layout.shear_count(j)
    }

    /// Coefficient raster of band `(j, k)`.
    pub fn band(&self, j: usize, k: usize) -> &[f64] {
        &self.planes[self.layout.offsets[j] + k]
    }

    pub fn theta(&self, j: usize, k: usize) -> f64 {
        self.thetas[self.layout.offsets[j] + k]
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, x: usize, y: usize) -> f64 {
        self.band(j, k)[y * self.layout.width + x]
    }

    /// All shearing responses at one pixel and scale, indexed by `k`.
    pub fn responses(&self, j: usize, x: usize, y: usize) -> Vec<f64> {
        let idx = y * self.layout.width + x;
        (0..self.shear_count(j))
            .map(|k| self.band(j, k)[idx])
            .collect()
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }
}

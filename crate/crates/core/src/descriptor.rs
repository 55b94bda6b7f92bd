//! Shearlet local descriptor: shearlet coefficients sampled on a 24x24 grid
//! that is scaled and rotated to the keypoint, pooled into 16 overlapping
//! subregions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Keypoint;
use crate::error::{Error, Result};
use crate::image::bilinear;
use crate::system::{shear_count, ShearletCoefficients};

/// Samples per grid side.
pub const GRID: usize = 24;
/// Samples per subregion side.
pub const BLOCK: usize = 9;
/// First sample index of each subregion along an axis.
pub const BLOCK_STARTS: [usize; 4] = [0, 5, 10, 15];
/// Subregion index along an axis, matching [`BLOCK_STARTS`].
pub const BLOCK_INDICES: [i32; 4] = [-2, -1, 1, 2];
/// Within-subregion Gaussian, in grid units.
pub const SUBREGION_SIGMA: f64 = 2.5;
/// Gaussian over the subregion indices `(e, f)`.
pub const REGION_SIGMA: f64 = 1.5;
/// Support radius `12 sqrt(2)` in grid units: the farthest a rotated grid
/// corner reaches.
pub const MARGIN_FACTOR: f64 = 12.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorParams {
    /// Common orientation count; a power of two, at least 4.
    pub c: usize,
    /// Gaussian smoothing across neighbouring shearings (sigma = K/5).
    pub shear_smoothing: bool,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            c: 4,
            shear_smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub c: usize,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, other: &Descriptor) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::DescriptorDimension(
                self.values.len(),
                other.values.len(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Descriptor length for `c` orientations: 2 statistics x c x 16 subregions.
pub fn descriptor_len(c: usize) -> usize {
    32 * c
}

fn check_c(c: usize) -> Result<()> {
    if c < 4 || !c.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "orientation count c={c} must be a power of two >= 4"
        )));
    }
    Ok(())
}

/// Shearings of scale `j` whose orientation is `pi (1 - q/c)`, `q = 0..c`.
pub fn common_orientations(c: usize, j: usize) -> Result<Vec<usize>> {
    check_c(c)?;
    let count = shear_count(j);
    if c > count {
        return Err(Error::InvalidParameter(format!(
            "c={c} exceeds the {count} shearings of scale {j}"
        )));
    }
    if !count.is_multiple_of(c) {
        return Err(Error::InvalidParameter(format!(
            "scale {j} has {count} shearings; orientations pi(1 - q/{c}) are not all present"
        )));
    }
    Ok((0..c).map(|q| q * count / c).collect())
}

/// Grid offset of sample `i`: `i - 11.5`.
#[inline]
pub fn sample_offset(i: usize) -> f64 {
    i as f64 - (GRID as f64 - 1.0) / 2.0
}

/// Centre of subregion block `b` in grid units: +-2.5 or +-7.5.
#[inline]
pub fn block_center(b: usize) -> f64 {
    sample_offset(BLOCK_STARTS[b]) + (BLOCK as f64 - 1.0) / 2.0
}

/// Subregions `(row, col)` containing sample `(iv, iu)`.
pub fn subregions_of(iv: usize, iu: usize) -> Vec<(usize, usize)> {
    let along = |i: usize| {
        BLOCK_STARTS
            .iter()
            .enumerate()
            .filter(move |(_, &s)| i >= s && i < s + BLOCK)
            .map(|(b, _)| b)
    };
    along(iv)
        .flat_map(|r| along(iu).map(move |c| (r, c)))
        .collect()
}

/// `(x, y) = s R(theta) (u, v) + (m1, m2)`.
#[inline]
pub fn rotate_frame(u: f64, v: f64, kp: &Keypoint) -> (f64, f64) {
    rotate_frame_at(u, v, kp.x, kp.y, kp.s, kp.theta)
}

#[inline]
fn rotate_frame_at(u: f64, v: f64, x: f64, y: f64, s: f64, theta: f64) -> (f64, f64) {
    let (sn, cs) = theta.sin_cos();
    (x + s * (cs * u - sn * v), y + s * (sn * u + cs * v))
}

/// Keypoint-relative shearing index: `t(k) = (k - n_theta) mod K`,
/// `n_theta = round(theta K / pi)`.
///
/// Orientation decreases with `k`, so subtracting `n_theta` reads the band
/// rotated along with the keypoint.
pub fn shear_shift(k: usize, count: usize, theta: f64) -> usize {
    let n = (theta * count as f64 / PI).round() as i64;
    (k as i64 - n).rem_euclid(count as i64) as usize
}

/// Image positions of the 24x24 grid, row-major in `(v, u)`.
pub fn sample_grid(kp: &Keypoint, width: usize, height: usize) -> Result<Vec<(f64, f64)>> {
    check_margin(kp, width, height)?;
    Ok(grid_positions(kp.x, kp.y, kp.s, kp.theta))
}

fn grid_positions(x: f64, y: f64, s: f64, theta: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(GRID * GRID);
    for iv in 0..GRID {
        for iu in 0..GRID {
            out.push(rotate_frame_at(
                sample_offset(iu),
                sample_offset(iv),
                x,
                y,
                s,
                theta,
            ));
        }
    }
    out
}

fn check_margin(kp: &Keypoint, width: usize, height: usize) -> Result<()> {
    let margin = MARGIN_FACTOR * kp.s;
    let inside = kp.x >= margin
        && kp.y >= margin
        && kp.x <= (width - 1) as f64 - margin
        && kp.y <= (height - 1) as f64 - margin;
    if inside {
        Ok(())
    } else {
        Err(Error::TooCloseToBorder {
            x: kp.x,
            y: kp.y,
            margin,
        })
    }
}

fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Weight of sample `(iv, iu)` inside subregion `(e, f)`.
fn sample_weight(e: usize, f: usize, iv: usize, iu: usize) -> f64 {
    let dv = sample_offset(iv) - block_center(e);
    let du = sample_offset(iu) - block_center(f);
    gauss(dv * dv + du * du, SUBREGION_SIGMA)
}

/// `(sum M g, sum |M| g)` over subregion `(e, f)` for one shearing `k`,
/// read through [`shear_shift`]. `e` and `f` are block indices `0..4`
/// (rows along `v`, columns along `u`).
pub fn subregion_stats(
    coeffs: &ShearletCoefficients,
    kp: &Keypoint,
    e: usize,
    f: usize,
    k: usize,
) -> [f64; 2] {
    let (w, h) = coeffs.dims();
    let j = kp.scale_index(coeffs.j0());
    let count = coeffs.shear_count(j);
    let band = coeffs.band(j, shear_shift(k, count, kp.theta));
    let mut mu = [0.0; 2];
    for iv in BLOCK_STARTS[e]..BLOCK_STARTS[e] + BLOCK {
        for iu in BLOCK_STARTS[f]..BLOCK_STARTS[f] + BLOCK {
            let (x, y) = rotate_frame(sample_offset(iu), sample_offset(iv), kp);
            let m = bilinear(band, w, h, x, y);
            let g = sample_weight(e, f, iv, iu);
            mu[0] += m * g;
            mu[1] += m.abs() * g;
        }
    }
    mu
}

/// Frame angle actually used for sampling.
///
/// `theta` only fixes the grid axis modulo pi. The half-turn is chosen so
/// that the scale's summed response, weighted by `|.|` and a broad Gaussian,
/// has a non-negative first moment along `u`.
pub fn frame_angle(coeffs: &ShearletCoefficients, kp: &Keypoint) -> f64 {
    let samples = sample_all(coeffs, kp, kp.theta);
    if polarity_moment(&samples, coeffs.shear_count(kp.scale_index(coeffs.j0()))) < 0.0 {
        kp.theta + PI
    } else {
        kp.theta
    }
}

/// `samples[(iv * GRID + iu) * K + k]` = band `k` at grid point `(iu, iv)`.
fn sample_all(coeffs: &ShearletCoefficients, kp: &Keypoint, theta: f64) -> Vec<f64> {
    let (w, h) = coeffs.dims();
    let j = kp.scale_index(coeffs.j0());
    let count = coeffs.shear_count(j);
    let pos = grid_positions(kp.x, kp.y, kp.s, theta);
    let mut out = vec![0.0; pos.len() * count];
    for k in 0..count {
        let band = coeffs.band(j, k);
        for (i, &(x, y)) in pos.iter().enumerate() {
            out[i * count + k] = bilinear(band, w, h, x, y);
        }
    }
    out
}

fn polarity_moment(samples: &[f64], count: usize) -> f64 {
    let mut m = 0.0;
    for iv in 0..GRID {
        for iu in 0..GRID {
            let i = iv * GRID + iu;
            let total: f64 = samples[i * count..(i + 1) * count].iter().sum();
            let (u, v) = (sample_offset(iu), sample_offset(iv));
            m += u * total.abs() * gauss(u * u + v * v, 8.0);
        }
    }
    m
}

fn smooth_shearings(samples: &mut [f64], count: usize) {
    let sigma = count as f64 / 5.0;
    let reach = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|d| gauss((d * d) as f64, sigma))
        .collect();
    let norm: f64 = kernel.iter().sum();
    let mut tmp = vec![0.0; count];
    for point in samples.chunks_mut(count) {
        for (k, t) in tmp.iter_mut().enumerate() {
            *t = kernel
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let src = (k as i64 + i as i64 - reach).rem_euclid(count as i64) as usize;
                    g * point[src]
                })
                .sum::<f64>()
                / norm;
        }
        point.copy_from_slice(&tmp);
    }
}

/// Shearlet local descriptor of one keypoint.
///
/// Coefficients come from the integer scale nearest `jfrac`; the grid step is
/// the keypoint's pixel scale `s`. Layout: 16 subregions row-major over
/// `(e, f)`, each holding `c` pairs `(sum M g, sum |M| g)` in common
/// orientation order, weighted by `g(e, f, 1.5)`; then l2-normalized.
pub fn describe(
    coeffs: &ShearletCoefficients,
    kp: &Keypoint,
    params: &DescriptorParams,
) -> Result<Descriptor> {
    let (w, h) = coeffs.dims();
    let j = kp.scale_index(coeffs.j0());
    let slots = common_orientations(params.c, j)?;
    check_margin(kp, w, h)?;
    let count = coeffs.shear_count(j);

    let mut samples = sample_all(coeffs, kp, kp.theta);
    if polarity_moment(&samples, count) < 0.0 {
        // half-turn of the frame: (u, v) -> (-u, -v)
        let mut flipped = vec![0.0; samples.len()];
        for i in 0..GRID * GRID {
            let src = GRID * GRID - 1 - i;
            flipped[i * count..(i + 1) * count]
                .copy_from_slice(&samples[src * count..(src + 1) * count]);
        }
        samples = flipped;
    }
    if params.shear_smoothing {
        smooth_shearings(&mut samples, count);
    }
    let bands: Vec<usize> = slots
        .iter()
        .map(|&k| shear_shift(k, count, kp.theta))
        .collect();

    let mut values = Vec::with_capacity(descriptor_len(params.c));
    for e in 0..4 {
        for f in 0..4 {
            let (be, bf) = (BLOCK_INDICES[e] as f64, BLOCK_INDICES[f] as f64);
            let region = gauss(be * be + bf * bf, REGION_SIGMA);
            for &b in &bands {
                let mut mu = [0.0; 2];
                for iv in BLOCK_STARTS[e]..BLOCK_STARTS[e] + BLOCK {
                    for iu in BLOCK_STARTS[f]..BLOCK_STARTS[f] + BLOCK {
                        let m = samples[(iv * GRID + iu) * count + b];
                        let g = sample_weight(e, f, iv, iu);
                        mu[0] += m * g;
                        mu[1] += m.abs() * g;
                    }
                }
                values.push(mu[0] * region);
                values.push(mu[1] * region);
            }
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::FlatPatch);
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(Descriptor {
        values,
        c: params.c,
    })
}

/// Describes every keypoint that admits a descriptor, keeping input order.
pub fn describe_all(
    coeffs: &ShearletCoefficients,
    keypoints: &[Keypoint],
    params: &DescriptorParams,
) -> Result<Vec<(Keypoint, Descriptor)>> {
    check_c(params.c)?;
    Ok(keypoints
        .par_iter()
        .filter_map(|kp| describe(coeffs, kp, params).ok().map(|d| (*kp, d)))
        .collect())
}

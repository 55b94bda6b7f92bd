//! Shearlet blob detector: the per-scale blob measure, scale-space extrema,
//! quadratic refinement, edge rejection and orientation assignment.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear, Raster};
use crate::system::{
    default_j0, input_bound, pixel_scale, ShearletCoefficients, ShearletSystem, REALNESS_TOLERANCE,
};

/// Per-scale normalization `C_j = 4 * 2^(j/2)`.
///
/// This is the shearing count `4 floor(2^(j/2))` without the floor: with the
/// floor, odd scales are biased by up to sqrt(2) relative to even ones.
#[inline]
pub fn b_normalizer(j: usize) -> f64 {
    4.0 * (0.5 * j as f64).exp2()
}

/// Weight applied to the coefficient sum: `2^(5j/4) / C_j`.
#[inline]
pub fn b_weight(j: usize) -> f64 {
    (1.25 * j as f64).exp2() / b_normalizer(j)
}

/// Blob measure `B(m, j)`, one raster per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BVolume {
    width: usize,
    height: usize,
    scales: Vec<Vec<f64>>,
}

impl BVolume {
    pub fn from_scales(width: usize, height: usize, scales: Vec<Vec<f64>>) -> Result<Self> {
        for s in &scales {
            if s.len() != width * height {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    got: (s.len(), 1),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite blob measure".into()));
            }
        }
        Ok(BVolume {
            width,
            height,
            scales,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn j0(&self) -> usize {
        self.scales.len()
    }

    pub fn normalizer(&self, j: usize) -> f64 {
        b_normalizer(j)
    }

    pub fn scale(&self, j: usize) -> &[f64] {
        &self.scales[j]
    }

    #[inline]
    pub fn get(&self, j: usize, x: usize, y: usize) -> f64 {
        self.scales[j][y * self.width + x]
    }

    pub fn max_abs(&self) -> f64 {
        self.scales
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Scale profile `j -> B(m, j)` at one pixel.
    pub fn profile(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.j0()).map(|j| self.get(j, x, y)).collect()
    }
}

/// `B(m, j) = 2^(5j/4) / C_j * sum_k SH(j, k, m)`.
pub fn b_measure(coeffs: &ShearletCoefficients) -> BVolume {
    let (w, h) = coeffs.dims();
    let scales = (0..coeffs.j0())
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![0.0; w * h];
            for k in 0..coeffs.shear_count(j) {
                for (a, v) in acc.iter_mut().zip(coeffs.band(j, k)) {
                    *a += v;
                }
            }
            let wgt = b_weight(j);
            acc.iter_mut().for_each(|a| *a *= wgt);
            acc
        })
        .collect();
    BVolume {
        width: w,
        height: h,
        scales,
    }
}

/// Same as `b_measure(system.transform(image))`, but filters each scale once
/// with the summed filter instead of inverting every band.
pub fn b_volume(system: &ShearletSystem, image: impl AsRef<Raster>) -> Result<BVolume> {
    let spec = system.spectrum(image.as_ref())?;
    let bound = input_bound(&spec);
    let (w, h) = system.dims();
    let scales: Vec<Result<Vec<f64>>> = (0..system.j0())
        .into_par_iter()
        .map(|j| {
            let mut filter = vec![0.0; w * h];
            for b in system.scale_bands(j) {
                for (a, v) in filter.iter_mut().zip(&b.filter) {
                    *a += v;
                }
            }
            let wgt = b_weight(j);
            filter.iter_mut().for_each(|a| *a *= wgt);
            let (re, ratio) = system.apply_filter(&spec, &filter, bound);
            if ratio > REALNESS_TOLERANCE {
                return Err(Error::ImaginaryResidue { j, k: 0, ratio });
            }
            Ok(re)
        })
        .collect();
    Ok(BVolume {
        width: w,
        height: h,
        scales: scales.into_iter().collect::<Result<_>>()?,
    })
}

/// Detection threshold on `|B|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Absolute(f64),
    /// Fraction of the image's `max |B|`.
    Relative(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Relative(0.01)
    }
}

impl Threshold {
    pub fn resolve(self, b: &BVolume) -> f64 {
        match self {
            Threshold::Absolute(t) => t,
            Threshold::Relative(r) => r * b.max_abs(),
        }
    }
}

/// Edge-rejection threshold on the spread measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeThreshold {
    /// Keep `eps <= t`.
    Absolute(f64),
    /// Keep candidates at or below this percentile (0..=100) of `eps` among
    /// the refined candidates.
    Percentile(f64),
    /// Keep `eps / SH(k_max)^2 <= r`. The ratio is 0 for an isotropic
    /// response and `(K-1)/K` when a single shearing responds.
    Relative(f64),
}

impl Default for EdgeThreshold {
    fn default() -> Self {
        EdgeThreshold::Relative(0.5)
    }
}

fn parse_mode(s: &str) -> Result<(&str, f64)> {
    let (mode, val) = s.split_once(':').unwrap_or(("abs", s));
    let v: f64 = val
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad threshold value {val:?}")))?;
    if !v.is_finite() && v != f64::INFINITY {
        return Err(Error::InvalidParameter(format!(
            "bad threshold value {val:?}"
        )));
    }
    if v < 0.0 {
        return Err(Error::InvalidParameter("threshold must be >= 0".into()));
    }
    Ok((mode.trim(), v))
}

impl FromStr for Threshold {
    type Err = Error;

    /// `abs:<t>` or `rel:<fraction>`; a bare number is absolute.
    fn from_str(s: &str) -> Result<Self> {
        match parse_mode(s)? {
            ("abs", v) => Ok(Threshold::Absolute(v)),
            ("rel", v) => Ok(Threshold::Relative(v)),
            (m, _) => Err(Error::InvalidParameter(format!(
                "unknown threshold mode {m:?}"
            ))),
        }
    }
}

impl FromStr for EdgeThreshold {
    type Err = Error;

    /// `abs:<t>`, `pct:<0..100>` or `rel:<ratio>`; a bare number is absolute.
    fn from_str(s: &str) -> Result<Self> {
        match parse_mode(s)? {
            ("abs", v) => Ok(EdgeThreshold::Absolute(v)),
            ("rel", v) => Ok(EdgeThreshold::Relative(v)),
            ("pct", v) if v <= 100.0 => Ok(EdgeThreshold::Percentile(v)),
            (m, _) => Err(Error::InvalidParameter(format!(
                "bad edge threshold {m:?}:{s}"
            ))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Absolute(v) => write!(f, "abs:{v}"),
            Threshold::Relative(v) => write!(f, "rel:{v}"),
        }
    }
}

impl fmt::Display for EdgeThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeThreshold::Absolute(v) => write!(f, "abs:{v}"),
            EdgeThreshold::Percentile(v) => write!(f, "pct:{v}"),
            EdgeThreshold::Relative(v) => write!(f, "rel:{v}"),
        }
    }
}

/// Lattice extremum of the blob measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub x: usize,
    pub y: usize,
    pub j: usize,
}

/// Strict 3x3x3 extrema with `|B| > threshold`.
///
/// Pixels on the image border and the first and last scale are never
/// candidates. Output is ordered by `(j, y, x)`.
pub fn find_extrema(b: &BVolume, threshold: f64) -> Vec<Candidate> {
    let (w, h) = b.dims();
    let j0 = b.j0();
    if j0 < 3 || w < 3 || h < 3 {
        return Vec::new();
    }
    let rows: Vec<(usize, usize)> = (1..j0 - 1)
        .flat_map(|j| (1..h - 1).map(move |y| (j, y)))
        .collect();
    rows.par_iter()
        .flat_map_iter(|&(j, y)| {
            (1..w - 1).filter_map(move |x| {
                let v = b.get(j, x, y);
                if v.abs() <= threshold || v.is_nan() {
                    return None;
                }
                let (mut is_max, mut is_min) = (true, true);
                for dj in 0..3 {
                    let plane = b.scale(j + dj - 1);
                    for dy in 0..3 {
                        let row = (y + dy - 1) * w;
                        for dx in 0..3 {
                            if dj == 1 && dy == 1 && dx == 1 {
                                continue;
                            }
                            let n = plane[row + x + dx - 1];
                            is_max &= v > n;
                            is_min &= v < n;
                        }
                    }
                    if !is_max && !is_min {
                        return None;
                    }
                }
                Some(Candidate { x, y, j })
            })
        })
        .collect()
}

/// Result of quadratic refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refined {
    /// Lattice point the fit converged at.
    pub lattice: Candidate,
    pub x: f64,
    pub y: f64,
    pub jfrac: f64,
    pub response: f64,
    /// `(dx, dy, dj)`; each within `[-0.5, 0.5]` unless the fit bounced
    /// between two neighbouring lattice points.
    pub offset: [f64; 3],
}

pub const REFINE_MAX_ITERATIONS: usize = 5;

/// Fits a 3D quadratic from central differences and moves to the vertex.
///
/// Any offset component beyond 0.5 moves the fit one lattice step that way.
/// If that step would return to an already visited point the current fit is
/// kept. Returns `None` when the Hessian is singular, the fit walks off the
/// interior, or it has not settled after [`REFINE_MAX_ITERATIONS`] steps.
pub fn refine(c: Candidate, b: &BVolume) -> Option<Refined> {
    let (w, h) = b.dims();
    let j0 = b.j0();
    if j0 < 3 || w < 3 || h < 3 {
        return None;
    }
    let (mut x, mut y, mut j) = (c.x as i64, c.y as i64, c.j as i64);
    let mut visited = Vec::with_capacity(REFINE_MAX_ITERATIONS);
    for _ in 0..REFINE_MAX_ITERATIONS {
        if x < 1 || y < 1 || j < 1 || x > w as i64 - 2 || y > h as i64 - 2 || j > j0 as i64 - 2 {
            return None;
        }
        let (xu, yu, ju) = (x as usize, y as usize, j as usize);
        let at = |dx: i64, dy: i64, dj: i64| {
            b.get(
                (ju as i64 + dj) as usize,
                (xu as i64 + dx) as usize,
                (yu as i64 + dy) as usize,
            )
        };
        let v = at(0, 0, 0);
        let g = Vector3::new(
            0.5 * (at(1, 0, 0) - at(-1, 0, 0)),
            0.5 * (at(0, 1, 0) - at(0, -1, 0)),
            0.5 * (at(0, 0, 1) - at(0, 0, -1)),
        );
        let dxx = at(1, 0, 0) - 2.0 * v + at(-1, 0, 0);
        let dyy = at(0, 1, 0) - 2.0 * v + at(0, -1, 0);
        let djj = at(0, 0, 1) - 2.0 * v + at(0, 0, -1);
        let dxy = 0.25 * (at(1, 1, 0) - at(-1, 1, 0) - at(1, -1, 0) + at(-1, -1, 0));
        let dxj = 0.25 * (at(1, 0, 1) - at(-1, 0, 1) - at(1, 0, -1) + at(-1, 0, -1));
        let dyj = 0.25 * (at(0, 1, 1) - at(0, -1, 1) - at(0, 1, -1) + at(0, -1, -1));
        let hess = Matrix3::new(dxx, dxy, dxj, dxy, dyy, dyj, dxj, dyj, djj);
        let scale = hess.abs().max();
        if scale == 0.0 || hess.determinant().abs() <= 1e-12 * scale.powi(3) {
            return None;
        }
        let delta = -(hess.lu().solve(&g)?);
        if delta.iter().any(|d| !d.is_finite()) {
            return None;
        }
        let step = |d: f64| {
            if d > 0.5 {
                1
            } else if d < -0.5 {
                -1
            } else {
                0
            }
        };
        let next = (x + step(delta[0]), y + step(delta[1]), j + step(delta[2]));
        // A vertex close to a cell boundary can make the fit bounce between
        // two lattice points; settle at the current one.
        let bounced = visited.contains(&next);
        visited.push((x, y, j));
        if bounced || delta.iter().all(|d| d.abs() <= 0.5) {
            return Some(Refined {
                lattice: Candidate {
                    x: xu,
                    y: yu,
                    j: ju,
                },
                x: x as f64 + delta[0],
                y: y as f64 + delta[1],
                jfrac: j as f64 + delta[2],
                response: v + 0.5 * g.dot(&delta),
                offset: [delta[0], delta[1], delta[2]],
            });
        }
        (x, y, j) = next;
    }
    None
}

/// Index of the largest `|SH|`; the first one wins ties.
pub fn dominant_shearing(responses: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in responses.iter().enumerate() {
        if v.abs() > responses[best].abs() {
            best = k;
        }
    }
    best
}

/// Spread of shearing responses around the dominant one:
/// `(1/K) * sum_k (SH_k - SH_kmax)^2`.
pub fn edge_measure(responses: &[f64]) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let top = responses[dominant_shearing(responses)];
    let s: f64 = responses.iter().map(|v| (v - top) * (v - top)).sum();
    s / responses.len() as f64
}

/// [`edge_measure`] divided by `SH_kmax^2`; 0 when every response is 0.
pub fn relative_edge_measure(responses: &[f64]) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let top = responses[dominant_shearing(responses)];
    if top == 0.0 {
        0.0
    } else {
        edge_measure(responses) / (top * top)
    }
}

/// `eps` at lattice point `(x, y)` of scale `j`.
pub fn edge_response(coeffs: &ShearletCoefficients, x: usize, y: usize, j: usize) -> f64 {
    edge_measure(&coeffs.responses(j, x, y))
}

/// Vertex of the parabola through `(-1, ym)`, `(0, y0)`, `(1, yp)`, in steps
/// toward `+1`. `None` when the three points are collinear.
pub fn parabola_vertex(ym: f64, y0: f64, yp: f64) -> Option<f64> {
    let den = ym - 2.0 * y0 + yp;
    let mag = ym.abs().max(y0.abs()).max(yp.abs());
    if den.abs() <= 1e-12 * mag || den == 0.0 {
        return None;
    }
    Some((ym - yp) / (2.0 * den))
}

/// Folds an angle into `(0, pi]`.
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t <= 0.0 {
        PI
    } else {
        t
    }
}

/// Orientation from `|SH|` of a scale's shearings: parabolic interpolation
/// around the dominant shearing, indices wrapping circularly.
pub fn orientation_from_responses(responses: &[f64]) -> f64 {
    let kn = responses.len();
    let k = dominant_shearing(responses);
    let step = PI / kn as f64;
    let theta_k = PI - k as f64 * step;
    let ym = responses[(k + kn - 1) % kn].abs();
    let yp = responses[(k + 1) % kn].abs();
    let y0 = responses[k].abs();
    match parabola_vertex(ym, y0, yp) {
        // k + 1 is the next shearing counter-clockwise, at a smaller theta
        Some(d) => fold_angle(theta_k - d * step),
        None => fold_angle(theta_k),
    }
}

/// Shearing responses of scale `j`, bilinearly interpolated at `(x, y)`.
pub fn responses_at(coeffs: &ShearletCoefficients, j: usize, x: f64, y: f64) -> Vec<f64> {
    let (w, h) = coeffs.dims();
    (0..coeffs.shear_count(j))
        .map(|k| bilinear(coeffs.band(j, k), w, h, x, y))
        .collect()
}

/// Orientation of a keypoint, at the integer scale nearest to its `jfrac`.
pub fn assign_orientation(coeffs: &ShearletCoefficients, kp: &Keypoint) -> f64 {
    let j = kp.scale_index(coeffs.j0());
    orientation_from_responses(&responses_at(coeffs, j, kp.x, kp.y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub jfrac: f64,
    /// Pixel scale `2^(j0 - jfrac)`.
    pub s: f64,
    /// Radians in `(0, pi]`.
    pub theta: f64,
    pub response: f64,
    pub epsilon: f64,
}

impl Keypoint {
    /// Nearest integer scale, clamped to `0..j0`.
    pub fn scale_index(&self, j0: usize) -> usize {
        (self.jfrac.round().max(0.0) as usize).min(j0.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    /// Number of scales; `None` picks `floor(log2(min(M, N))) - 3`.
    pub j0: Option<usize>,
    pub threshold: Threshold,
    pub edge_threshold: EdgeThreshold,
    /// Candidates closer than this to any border are dropped.
    pub border: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            j0: None,
            threshold: Threshold::default(),
            edge_threshold: EdgeThreshold::default(),
            border: 8.0,
        }
    }
}

impl DetectParams {
    pub fn resolve_j0(&self, width: usize, height: usize) -> usize {
        self.j0.unwrap_or_else(|| default_j0(width, height))
    }
}

fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p / 100.0 * (v.len() - 1) as f64).clamp(0.0, (v.len() - 1) as f64);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Keypoints from an existing transform. The blob measure is recomputed
/// from the coefficients.
pub fn detect_from_coefficients(
    coeffs: &ShearletCoefficients,
    params: &DetectParams,
) -> Vec<Keypoint> {
    let b = b_measure(coeffs);
    detect_in(coeffs, &b, params)
}

/// Edge test at lattice points: `(eps, kept)` per point. Percentile
/// thresholds are taken over the given points.
pub fn edge_test(
    coeffs: &ShearletCoefficients,
    points: &[Candidate],
    threshold: EdgeThreshold,
) -> Vec<(f64, bool)> {
    let measures: Vec<(f64, f64)> = points
        .par_iter()
        .map(|c| {
            let resp = coeffs.responses(c.j, c.x, c.y);
            (edge_measure(&resp), relative_edge_measure(&resp))
        })
        .collect();
    let pct = match threshold {
        EdgeThreshold::Percentile(p) => {
            percentile(&measures.iter().map(|m| m.0).collect::<Vec<_>>(), p)
        }
        _ => 0.0,
    };
    measures
        .into_iter()
        .map(|(e, r)| {
            let keep = match threshold {
                EdgeThreshold::Absolute(t) => e <= t,
                EdgeThreshold::Relative(t) => r <= t,
                EdgeThreshold::Percentile(_) => e <= pct,
            };
            (e, keep)
        })
        .collect()
}

/// Keypoints given both the transform and its blob measure.
pub fn detect_in(
    coeffs: &ShearletCoefficients,
    b: &BVolume,
    params: &DetectParams,
) -> Vec<Keypoint> {
    let (w, h) = coeffs.dims();
    let j0 = coeffs.j0();
    let thr = params.threshold.resolve(b);
    let refined: Vec<Refined> = find_extrema(b, thr)
        .par_iter()
        .filter_map(|&c| refine(c, b))
        .filter(|r| {
            r.response.abs() > thr
                && r.x >= params.border
                && r.y >= params.border
                && r.x <= (w - 1) as f64 - params.border
                && r.y <= (h - 1) as f64 - params.border
        })
        .collect();
    let lattice: Vec<Candidate> = refined.iter().map(|r| r.lattice).collect();
    let edges = edge_test(coeffs, &lattice, params.edge_threshold);
    let mut out: Vec<Keypoint> = refined
        .par_iter()
        .zip(edges)
        .filter(|(_, (_, keep))| *keep)
        .map(|(r, (e, _))| {
            let mut kp = Keypoint {
                x: r.x,
                y: r.y,
                jfrac: r.jfrac,
                s: pixel_scale(j0, r.jfrac),
                theta: PI,
                response: r.response,
                epsilon: e,
            };
            kp.theta = assign_orientation(coeffs, &kp);
            kp
        })
        .collect();
    sort_keypoints(&mut out);
    out
}

/// `|response|` descending, then `(y, x)` ascending.
pub fn sort_keypoints(kps: &mut [Keypoint]) {
    kps.sort_by(|a, b| {
        b.response
            .abs()
            .total_cmp(&a.response.abs())
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
            .then(a.jfrac.total_cmp(&b.jfrac))
    });
}

/// Builds the filter bank, transforms and detects.
pub fn detect(image: impl AsRef<Raster>, params: &DetectParams) -> Result<Vec<Keypoint>> {
    let r = image.as_ref();
    let (w, h) = r.dims();
    let system = ShearletSystem::new(w, h, params.resolve_j0(w, h))?;
    let coeffs = system.transform(r)?;
    Ok(detect_from_coefficients(&coeffs, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn gaussian_blob(w: usize, h: usize, cx: f64, cy: f64, sigma: f64) -> Image {
        let r = Raster::from_fn(w, h, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            0.2 + 0.6 * (-d2 / (2.0 * sigma * sigma)).exp()
        });
        Image::from_raster(r).unwrap()
    }

    fn volume_from_fn(w: usize, h: usize, j0: usize, f: impl Fn(f64, f64, f64) -> f64) -> BVolume {
        let scales = (0..j0)
            .map(|j| {
                (0..w * h)
                    .map(|i| f((i % w) as f64, (i / w) as f64, j as f64))
                    .collect()
            })
            .collect();
        BVolume::from_scales(w, h, scales).unwrap()
    }

    #[test]
    fn weight_reduces_to_quarter_per_unit_shear() {
        for j in 0..8 {
            let w = b_weight(j) * (-0.75 * j as f64).exp2();
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert_eq!(b_normalizer(0), 4.0);
        assert_eq!(b_normalizer(2), 8.0);
    }

    #[test]
    fn constant_image_has_zero_measure() {
        let sys = ShearletSystem::new(32, 32, 3).unwrap();
        let img = Image::constant(32, 32, 0.7).unwrap();
        let b = b_measure(&sys.transform(&img).unwrap());
        assert!(b.max_abs() < 1e-12);
    }

    #[test]
    fn fast_volume_matches_band_sum() {
        let sys = ShearletSystem::new(80, 64, 4).unwrap();
        let img = gaussian_blob(80, 64, 30.3, 21.7, 4.0);
        let a = b_measure(&sys.transform(&img).unwrap());
        let b = b_volume(&sys, &img).unwrap();
        for j in 0..4 {
            for (u, v) in a.scale(j).iter().zip(b.scale(j)) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn flat_and_infinite_threshold_give_no_candidates() {
        let flat = volume_from_fn(10, 10, 4, |_, _, _| 1.0);
        assert!(find_extrema(&flat, 0.0).is_empty());
        let bump = volume_from_fn(10, 10, 4, |x, y, j| {
            -((x - 5.0).powi(2) + (y - 4.0).powi(2) + (j - 1.0).powi(2))
        });
        assert!(find_extrema(&bump, f64::INFINITY).is_empty());
    }

    #[test]
    fn extrema_respect_borders_and_outer_scales() {
        // peak at x = 0 and another at scale 0
        let v = volume_from_fn(10, 10, 4, |x, y, j| {
            10.0 - ((x - 0.0).powi(2) + (y - 5.0).powi(2) + (j - 2.0).powi(2))
        });
        assert!(find_extrema(&v, 0.0).is_empty());
        let v = volume_from_fn(10, 10, 4, |x, y, j| {
            10.0 - ((x - 5.0).powi(2) + (y - 5.0).powi(2) + j * j)
        });
        assert!(find_extrema(&v, 0.0).is_empty());
    }

    #[test]
    fn minima_count_as_extrema() {
        let v = volume_from_fn(10, 10, 4, |x, y, j| {
            -10.0 + (x - 4.0).powi(2) + (y - 6.0).powi(2) + (j - 2.0).powi(2)
        });
        assert_eq!(find_extrema(&v, 1.0), vec![Candidate { x: 4, y: 6, j: 2 }]);
    }

    #[test]
    fn plateau_yields_nothing() {
        let v = volume_from_fn(10, 10, 4, |x, y, _| {
            if (4.0..=5.0).contains(&x) && y == 5.0 {
                2.0
            } else {
                1.0
            }
        });
        assert!(find_extrema(&v, 0.0).is_empty());
    }

    #[test]
    fn single_blob_single_dominant_candidate() {
        let img = gaussian_blob(64, 64, 32.0, 32.0, 3.0);
        let sys = ShearletSystem::new(64, 64, 4).unwrap();
        let b = b_measure(&sys.transform(&img).unwrap());
        let c = find_extrema(&b, 0.3 * b.max_abs());
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].x, c[0].y), (32, 32));
        // brute-force oracle: global |B| maximum over interior scales
        let mut best = (0.0, 0, 0, 0);
        for j in 1..3 {
            for y in 1..63 {
                for x in 1..63 {
                    let v = b.get(j, x, y).abs();
                    if v > best.0 {
                        best = (v, x, y, j);
                    }
                }
            }
        }
        assert_eq!((best.1, best.2, best.3), (c[0].x, c[0].y, c[0].j));
    }

    #[test]
    fn refine_recovers_quadratic_vertex() {
        let (ox, oy, oj) = (5.3, 4.8, 2.1);
        let v = volume_from_fn(12, 12, 5, |x, y, j| {
            3.0 - (x - ox).powi(2) - 0.5 * (y - oy).powi(2) - 2.0 * (j - oj).powi(2)
                + 0.2 * (x - ox) * (y - oy)
        });
        let r = refine(Candidate { x: 5, y: 5, j: 2 }, &v).unwrap();
        assert!((r.offset[0] - 0.3).abs() < 1e-6);
        assert!((r.offset[1] + 0.2).abs() < 1e-6);
        assert!((r.offset[2] - 0.1).abs() < 1e-6);
        assert!((r.response - 3.0).abs() < 1e-9);
    }

    #[test]
    fn refine_centered_peak_has_zero_offset() {
        let v = volume_from_fn(9, 9, 4, |x, y, j| {
            -((x - 4.0).powi(2) + (y - 4.0).powi(2) + (j - 2.0).powi(2))
        });
        let r = refine(Candidate { x: 4, y: 4, j: 2 }, &v).unwrap();
        assert_eq!(r.offset, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn refine_relocates_saddle() {
        let v = volume_from_fn(12, 12, 5, |x, y, j| {
            (x - 5.7).powi(2) - (y - 5.0).powi(2) - (j - 2.0).powi(2)
        });
        let r = refine(Candidate { x: 5, y: 5, j: 2 }, &v).unwrap();
        assert_eq!(r.lattice.x, 6);
        assert!((r.x - 5.7).abs() < 1e-9);
    }

    #[test]
    fn refine_rejects_singular_and_runaway() {
        let lin = volume_from_fn(12, 12, 5, |x, _, _| x);
        assert!(refine(Candidate { x: 5, y: 5, j: 2 }, &lin).is_none());
        let far = volume_from_fn(40, 12, 5, |x, y, j| {
            -(x - 35.0).powi(2) - (y - 5.0).powi(2) - (j - 2.0).powi(2)
        });
        assert!(refine(Candidate { x: 5, y: 5, j: 2 }, &far).is_none());
    }

    #[test]
    fn edge_measure_cases() {
        assert_eq!(edge_measure(&[0.4; 8]), 0.0);
        let mut one = vec![0.0; 8];
        one[3] = 2.0;
        assert!((edge_measure(&one) - 7.0 * 4.0 / 8.0).abs() < 1e-15);
        assert!((relative_edge_measure(&one) - 7.0 / 8.0).abs() < 1e-15);
        one[5] = -2.5;
        assert!(edge_measure(&one) >= 0.0);
    }

    #[test]
    fn edge_point_spreads_more_than_blob_center() {
        let (w, h) = (64usize, 64usize);
        let sys = ShearletSystem::new(w, h, 4).unwrap();
        let blob = gaussian_blob(w, h, 32.0, 32.0, 3.0);
        let cb = sys.transform(&blob).unwrap();
        let b = b_measure(&cb);
        let j = (0..4)
            .max_by(|&a, &c| b.get(a, 32, 32).abs().total_cmp(&b.get(c, 32, 32).abs()))
            .unwrap();
        let edge = Image::from_raster(Raster::from_fn(w, h, |x, _| {
            if (16..48).contains(&x) {
                0.8
            } else {
                0.2
            }
        }))
        .unwrap();
        let ce = sys.transform(&edge).unwrap();
        assert!(edge_response(&ce, 16, 32, j) > edge_response(&cb, 32, 32, j));
        assert!(relative_edge_measure(&ce.responses(j, 16, 32)) > 0.5);
        assert!(relative_edge_measure(&cb.responses(j, 32, 32)) < 0.05);
    }

    #[test]
    fn parabola_orientation() {
        assert_eq!(parabola_vertex(1.0, 2.0, 1.0), Some(0.0));
        assert!((parabola_vertex(1.0, 2.0, 1.5).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(parabola_vertex(1.0, 1.0, 1.0), None);
        // k = 2 of 8 is 3pi/4; the vertex lies 1/6 step toward k = 3
        let r = [0.0, 1.0, 2.0, 1.5, 0.0, 0.0, 0.0, 0.0];
        let t = orientation_from_responses(&r);
        assert!((t - (0.75 * PI - PI / 8.0 / 6.0)).abs() < 1e-12);
        let sym = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.5];
        assert!((orientation_from_responses(&sym) - PI / 4.0).abs() < 1e-12);
        // wraps around k = 0 into (0, pi]
        let wrap = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5];
        let t = orientation_from_responses(&wrap);
        assert!((t - 0.3 * PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn fold_angle_range() {
        assert_eq!(fold_angle(0.0), PI);
        assert_eq!(fold_angle(PI), PI);
        assert!((fold_angle(-0.25) - (PI - 0.25)).abs() < 1e-15);
        assert!((fold_angle(PI + 0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_blob_orientation() {
        let (w, h) = (128usize, 128usize);
        let sys = ShearletSystem::new(w, h, 5).unwrap();
        // long axis along the image diagonal x = y (y pointing down)
        let img = Image::from_raster(Raster::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - 64.0, y as f64 - 64.0);
            let a = (dx + dy) / 2f64.sqrt();
            let b = (dx - dy) / 2f64.sqrt();
            0.2 + 0.6 * (-(a * a) / (2.0 * 64.0) - (b * b) / (2.0 * 9.0)).exp()
        }))
        .unwrap();
        let c = sys.transform(&img).unwrap();
        let b = b_measure(&c);
        let j = (1..4)
            .max_by(|&a, &d| b.get(a, 64, 64).abs().total_cmp(&b.get(d, 64, 64).abs()))
            .unwrap();
        let kp = Keypoint {
            x: 64.0,
            y: 64.0,
            jfrac: j as f64,
            s: 1.0,
            theta: 0.0,
            response: 0.0,
            epsilon: 0.0,
        };
        let t = assign_orientation(&c, &kp);
        let step = PI / c.shear_count(j) as f64;
        // brute-force oracle: orientation of the strongest band
        let resp = c.responses(j, 64, 64);
        let k = dominant_shearing(&resp);
        let tk = c.theta(j, k);
        assert!((t - tk).abs() <= step + 1e-12);
        let d = (t - PI / 4.0).abs().min((t - 3.0 * PI / 4.0).abs());
        assert!(d <= step + 1e-9, "theta {t} step {step}");
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(
            "rel:0.01".parse::<Threshold>().unwrap(),
            Threshold::Relative(0.01)
        );
        assert_eq!(
            "0.5".parse::<Threshold>().unwrap(),
            Threshold::Absolute(0.5)
        );
        assert_eq!(
            "pct:75".parse::<EdgeThreshold>().unwrap(),
            EdgeThreshold::Percentile(75.0)
        );
        assert!("pct:150".parse::<EdgeThreshold>().is_err());
        assert!("xyz:1".parse::<Threshold>().is_err());
        assert!("rel:-1".parse::<Threshold>().is_err());
        let t = EdgeThreshold::Relative(0.3);
        assert_eq!(t.to_string().parse::<EdgeThreshold>().unwrap(), t);
    }

    #[test]
    fn blank_image_detects_nothing() {
        let img = Image::constant(64, 64, 0.3).unwrap();
        assert!(detect(&img, &DetectParams::default()).unwrap().is_empty());
    }

    #[test]
    fn blob_detected_at_center() {
        let img = gaussian_blob(128, 128, 60.0, 70.0, 4.0);
        let kps = detect(&img, &DetectParams::default()).unwrap();
        let k = &kps[0];
        assert!(
            (k.x - 60.0).abs() < 0.5 && (k.y - 70.0).abs() < 0.5,
            "{k:?}"
        );
        assert!(k.theta > 0.0 && k.theta <= PI);
        for w in kps.windows(2) {
            assert!(w[0].response.abs() >= w[1].response.abs());
        }
    }
}

//! Synthetic signals and closed-form scale curves used to check scale
//! selection numerically.
//!
//! For `f = cos(alpha x) cos(beta y)` with `|beta| <= |alpha|`, the blob
//! measure at pixel scale `a` has amplitude `bmax(a, alpha) / 4`, so the
//! empirical curve is the closed form up to a constant; the scale-normalized
//! Laplacian of Gaussian gives `laplacian_max(a, alpha, beta)` exactly.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{b_volume, BVolume};
use crate::error::{Error, Result};
use crate::fourier::{dft2, idft2_real, signed_frequency, Spectrum};
use crate::image::{Image, Raster};
use crate::system::{pixel_scale, ShearletSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SyntheticKind {
    /// `cos(alpha x) cos(beta y)`, radians per pixel.
    Sinusoid { alpha: f64, beta: f64 },
    /// Gaussian bump centred on the raster, rotated by `angle`.
    Gaussian {
        sigma_x: f64,
        sigma_y: f64,
        angle: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub width: usize,
    pub height: usize,
}

impl SyntheticSpec {
    pub fn sinusoid(width: usize, height: usize, alpha: f64, beta: f64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Sinusoid { alpha, beta },
            width,
            height,
        }
    }

    /// Sinusoid with an integer number of periods across the raster:
    /// `alpha = 2 pi qx / M`, `beta = 2 pi qy / N`.
    pub fn periodic_sinusoid(width: usize, height: usize, qx: usize, qy: usize) -> Self {
        Self::sinusoid(
            width,
            height,
            2.0 * PI * qx as f64 / width as f64,
            2.0 * PI * qy as f64 / height as f64,
        )
    }

    pub fn gaussian(width: usize, height: usize, sigma_x: f64, sigma_y: f64, angle: f64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Gaussian {
                sigma_x,
                sigma_y,
                angle,
            },
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("empty raster".into()));
        }
        match self.kind {
            SyntheticKind::Sinusoid { alpha, beta } => {
                if !(alpha.abs() < PI && beta.abs() < PI) {
                    return Err(Error::InvalidParameter(format!(
                        "frequencies ({alpha}, {beta}) at or above Nyquist (pi)"
                    )));
                }
            }
            SyntheticKind::Gaussian {
                sigma_x, sigma_y, ..
            } => {
                if !(sigma_x > 0.0 && sigma_y > 0.0) {
                    return Err(Error::InvalidParameter("sigma must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Function values at pixel centres, before remapping.
    pub fn raw(&self) -> Result<Raster> {
        self.validate()?;
        match self.kind {
            SyntheticKind::Sinusoid { alpha, beta } => {
                Ok(Raster::from_fn(self.width, self.height, |x, y| {
                    (alpha * x as f64).cos() * (beta * y as f64).cos()
                }))
            }
            SyntheticKind::Gaussian {
                sigma_x,
                sigma_y,
                angle,
            } => {
                let (cx, cy) = (
                    (self.width - 1) as f64 / 2.0,
                    (self.height - 1) as f64 / 2.0,
                );
                let (s, c) = angle.sin_cos();
                Ok(Raster::from_fn(self.width, self.height, |x, y| {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    let u = c * dx + s * dy;
                    let v = -s * dx + c * dy;
                    (-(u * u) / (2.0 * sigma_x * sigma_x) - v * v / (2.0 * sigma_y * sigma_y)).exp()
                }))
            }
        }
    }
}

/// Samples the signal and maps its range (`[-1, 1]` for sinusoids, `[0, 1]`
/// for Gaussians) onto `[0, 1]`.
pub fn synth(spec: &SyntheticSpec) -> Result<Image> {
    let raw = spec.raw()?;
    let r = match spec.kind {
        SyntheticKind::Sinusoid { .. } => raw.map(|v| 0.5 * (v + 1.0)),
        SyntheticKind::Gaussian { .. } => raw,
    };
    Image::from_raster(r.map(|v| v.clamp(0.0, 1.0)))
}

/// `(1 / 4 pi^2) (a alpha)^2 exp(-(a alpha)^2 / 2)`.
pub fn bmax_theoretical(a: f64, alpha: f64) -> f64 {
    let u2 = (a * alpha).powi(2);
    u2 * (-u2 / 2.0).exp() / (4.0 * PI * PI)
}

/// Scale of the closed-form shearlet peak: `sqrt(2) / alpha`.
pub fn bmax_argmax(alpha: f64) -> f64 {
    std::f64::consts::SQRT_2 / alpha
}

/// Peak value of [`bmax_theoretical`]: `2 / (4 pi^2 e)`, whatever `alpha`.
pub fn bmax_peak() -> f64 {
    2.0 * (-1.0f64).exp() / (4.0 * PI * PI)
}

/// `a^2 (alpha^2 + beta^2) exp(-a^2 (alpha^2 + beta^2) / 2)`.
pub fn laplacian_max_theoretical(a: f64, alpha: f64, beta: f64) -> f64 {
    let t = a * a * (alpha * alpha + beta * beta);
    t * (-t / 2.0).exp()
}

/// `sqrt(2 / (alpha^2 + beta^2))`.
pub fn laplacian_argmax(alpha: f64, beta: f64) -> f64 {
    (2.0 / (alpha * alpha + beta * beta)).sqrt()
}

/// `2 / e`.
pub fn laplacian_peak() -> f64 {
    2.0 * (-1.0f64).exp()
}

/// Explanation of where the closed forms put their maxima.
pub const ARGMAX_NOTE: &str = "closed-form peaks: u^2 exp(-u^2/2) is maximal at u = sqrt(2), \
so the shearlet curve peaks at a* = sqrt(2)/alpha and the Laplacian curve at \
a* = sqrt(2/(alpha^2+beta^2)); the values 1/alpha and 1/sqrt(alpha^2+beta^2) sometimes \
quoted for these curves are smaller by a factor sqrt(2). Peak heights are \
1/(2 pi^2 e) and 2/e independently of the frequencies.";

/// Response of a signal over pixel scales, with a sub-sample peak estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCurve {
    /// Strictly increasing pixel scales.
    pub a: Vec<f64>,
    pub values: Vec<f64>,
    /// Peak location from a parabola through the largest sample and its
    /// neighbours on the `log2 a` axis; the sample itself at either end.
    pub argmax: f64,
    pub peak: f64,
}

impl ScaleCurve {
    pub fn new(a: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != values.len() {
            return Err(Error::InvalidParameter(
                "scale curve needs matching, non-empty axes".into(),
            ));
        }
        if a.windows(2).any(|w| w[1] <= w[0]) || a[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "scale axis must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite curve value".into()));
        }
        let i = values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
            .unwrap();
        let (argmax, peak) = if i == 0 || i + 1 == a.len() {
            (a[i], values[i])
        } else {
            let x = [a[i - 1].log2(), a[i].log2(), a[i + 1].log2()];
            let y = [values[i - 1], values[i], values[i + 1]];
            match parabola_peak(x, y) {
                Some((xv, yv)) => (xv.exp2(), yv),
                None => (a[i], values[i]),
            }
        };
        Ok(ScaleCurve {
            a,
            values,
            argmax,
            peak,
        })
    }
}

/// Vertex of the parabola through three points with distinct abscissae.
fn parabola_peak(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv >= 0.0 || !curv.is_finite() {
        return None;
    }
    // y = y1 + d (x - x1) + curv (x - x1)^2 locally, with d the slope at x1
    let d = d1 + curv * (x[1] - x[0]);
    let xv = x[1] - d / (2.0 * curv);
    let yv = y[1] - d * d / (4.0 * curv);
    Some((xv, yv))
}

/// `V(j) = max_m |B(m, j)|` as a curve over pixel scale.
pub fn bmax_curve(b: &BVolume, j0: usize) -> Result<ScaleCurve> {
    let mut pts: Vec<(f64, f64)> = (0..b.j0())
        .map(|j| {
            let v = b.scale(j).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (pixel_scale(j0, j as f64), v)
        })
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    ScaleCurve::new(
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1).collect(),
    )
}

/// Empirical `B_max` curve of an image.
pub fn empirical_bmax(image: &Image, system: &ShearletSystem) -> Result<ScaleCurve> {
    bmax_curve(&b_volume(system, image)?, system.j0())
}

/// Fractional scale index of a pixel scale.
pub fn scale_index_of(a: f64, j0: usize) -> f64 {
    j0 as f64 - a.log2()
}

/// Scale-normalized Laplacian of Gaussian, `a^2 lap(g_a * f)`, by FFT.
pub fn laplacian_response(raster: &Raster, a: f64) -> Result<Vec<f64>> {
    let spec = dft2(raster);
    let (w, h) = raster.dims();
    let mut data = spec.data.clone();
    for py in 0..h {
        let fy = signed_frequency(py, h) as f64 / h as f64;
        for px in 0..w {
            let fx = signed_frequency(px, w) as f64 / w as f64;
            let w2 = 4.0 * PI * PI * (fx * fx + fy * fy);
            data[py * w + px] *= -a * a * w2 * (-a * a * w2 / 2.0).exp();
        }
    }
    let (re, _) = idft2_real(&Spectrum::new(w, h, data)?);
    Ok(re)
}

/// Empirical `max_m |a^2 lap(g_a * f)|` over the given scales.
pub fn empirical_laplacian(raster: &Raster, scales: &[f64]) -> Result<ScaleCurve> {
    let vals: Result<Vec<f64>> = scales
        .par_iter()
        .map(|&a| {
            Ok(laplacian_response(raster, a)?
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs())))
        })
        .collect();
    ScaleCurve::new(scales.to_vec(), vals?)
}

/// Closed-form curves sampled at the given scales.
pub fn theoretical_bmax_curve(alpha: f64, scales: &[f64]) -> Result<ScaleCurve> {
    ScaleCurve::new(
        scales.to_vec(),
        scales.iter().map(|&a| bmax_theoretical(a, alpha)).collect(),
    )
}

pub fn theoretical_laplacian_curve(alpha: f64, beta: f64, scales: &[f64]) -> Result<ScaleCurve> {
    ScaleCurve::new(
        scales.to_vec(),
        scales
            .iter()
            .map(|&a| laplacian_max_theoretical(a, alpha, beta))
            .collect(),
    )
}

/// Log-spaced scales `a0 * 2^(i / per_octave)`.
pub fn log_scales(a0: f64, octaves: usize, per_octave: usize) -> Vec<f64> {
    (0..=octaves * per_octave)
        .map(|i| a0 * (i as f64 / per_octave as f64).exp2())
        .collect()
}

/// Zeroes every frequency outside the central half band, so that the
/// raster survives [`Raster::fourier_decimate2`] losslessly.
pub fn band_limit_half(raster: &Raster) -> Result<Raster> {
    let (w, h) = raster.dims();
    let mut spec = dft2(raster);
    for py in 0..h {
        let fy = signed_frequency(py, h).unsigned_abs() as usize;
        for px in 0..w {
            let fx = signed_frequency(px, w).unsigned_abs() as usize;
            if 4 * fx >= w || 4 * fy >= h {
                spec.data[py * w + px] = 0.0.into();
            }
        }
    }
    let (re, _) = idft2_real(&spec);
    Raster::new(w, h, re)
}

/// Dilation check with factor 2.
///
/// `raster` should be band-limited to the central half band. It is decimated
/// by 2 in the Fourier domain; with a shared `j0`, the decimated image's
/// scale `j + 1` has the same physical scale as the original's scale `j`,
/// and the two blob measures should agree at corresponding pixels. Returns
/// the largest `|B_dec(m, j+1) - B(2m, j)| / |B(2m, j)|` over the points in
/// the top decile of `|B(2m, j)|`; 0 when the measure vanishes.
pub fn scale_invariance_check(raster: &Raster, j0: usize) -> Result<f64> {
    let (w, h) = raster.dims();
    let dec = raster.fourier_decimate2()?;
    let sys = ShearletSystem::new(w, h, j0)?;
    let sys_dec = ShearletSystem::new(w / 2, h / 2, j0)?;
    let b = b_volume(&sys, raster)?;
    let bd = b_volume(&sys_dec, &dec)?;
    let (wd, hd) = (w / 2, h / 2);
    let mut pairs = Vec::new();
    for j in 0..j0 - 1 {
        for y in 0..hd {
            for x in 0..wd {
                pairs.push((b.get(j, 2 * x, 2 * y), bd.get(j + 1, x, y)));
            }
        }
    }
    let mut mags: Vec<f64> = pairs.iter().map(|p| p.0.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let cut = mags[(mags.len() * 9) / 10];
    let top = mags.last().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0.0);
    }
    Ok(pairs
        .iter()
        .filter(|p| p.0.abs() >= cut && p.0 != 0.0)
        .map(|p| (p.1 - p.0).abs() / p.0.abs())
        .fold(0.0, f64::max))
}

/// Per-scale decomposition of a centred Gaussian: `(j, a, B(centre, j),
/// max |B(., j)|)`.
pub fn gaussian_decomposition(
    spec: &SyntheticSpec,
    j0: usize,
) -> Result<Vec<(usize, f64, f64, f64)>> {
    let img = synth(spec)?;
    let sys = ShearletSystem::new(spec.width, spec.height, j0)?;
    let b = b_volume(&sys, &img)?;
    let (cx, cy) = (spec.width / 2, spec.height / 2);
    Ok((0..j0)
        .map(|j| {
            let m = b.scale(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (j, pixel_scale(j0, j as f64), b.get(j, cx, cy), m)
        })
        .collect())
}

/// One curve of a frequency sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub alpha: f64,
    pub beta: f64,
    pub curve: ScaleCurve,
    /// Fractional scale index of the peak.
    pub j_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub curves: Vec<SweepCurve>,
    /// `(max - min) / mean` of the peak heights.
    pub peak_spread: f64,
    /// Largest deviation of consecutive `j_star` differences from 1.
    pub step_error: f64,
}

/// Empirical `B_max` over a geometric family of periodic sinusoids:
/// `qx = q0 2^i`, `qy = ratio * qx`, `i = 0..count`.
pub fn sinusoid_sweep(
    size: usize,
    j0: usize,
    q0: usize,
    count: usize,
    ratio: f64,
) -> Result<SweepSummary> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "sweep needs at least one curve".into(),
        ));
    }
    let sys = ShearletSystem::new(size, size, j0)?;
    let curves: Result<Vec<SweepCurve>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let qx = q0 << i;
            let qy = (qx as f64 * ratio).round() as usize;
            let spec = SyntheticSpec::periodic_sinusoid(size, size, qx, qy);
            let img = synth(&spec)?;
            let curve = empirical_bmax(&img, &sys)?;
            let (alpha, beta) = match spec.kind {
                SyntheticKind::Sinusoid { alpha, beta } => (alpha, beta),
                _ => unreachable!(),
            };
            Ok(SweepCurve {
                alpha,
                beta,
                j_star: scale_index_of(curve.argmax, j0),
                curve,
            })
        })
        .collect();
    let curves = curves?;
    let peaks: Vec<f64> = curves.iter().map(|c| c.curve.peak).collect();
    let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
    let max = peaks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = peaks.iter().cloned().fold(f64::INFINITY, f64::min);
    let step_error = curves
        .windows(2)
        .map(|w| (w[1].j_star - w[0].j_star - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(SweepSummary {
        curves,
        peak_spread: (max - min) / mean,
        step_error,
    })
}

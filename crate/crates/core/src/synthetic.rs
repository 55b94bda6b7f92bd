//! Seeded synthetic scenes with known structure, for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{Image, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

fn render(w: usize, h: usize, background: f64, blobs: &[Blob]) -> Image {
    Image::from_raster_clamped(Raster::from_fn(w, h, |x, y| {
        background
            + blobs
                .iter()
                .map(|b| {
                    let d2 = (x as f64 - b.x).powi(2) + (y as f64 - b.y).powi(2);
                    b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum::<f64>()
    }))
}

/// `count` isotropic Gaussian blobs on a mid-grey background with sigmas
/// spread geometrically over `[sigma_min, sigma_min * 2^octaves]` and
/// alternating polarity. Centres are at least `3 (sigma_a + sigma_b)` apart
/// and `2 sigma + 12` px from the border.
pub fn blob_field(
    n: usize,
    count: usize,
    sigma_min: f64,
    octaves: f64,
    seed: u64,
) -> (Image, Vec<Blob>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigmas: Vec<f64> = (0..count)
        .map(|i| sigma_min * (octaves * i as f64 / (count.max(2) - 1) as f64).exp2())
        .collect();
    let mut placed: Vec<Blob> = Vec::with_capacity(count);
    // largest first, so the small ones fill the gaps
    for &sigma in sigmas.iter().rev() {
        let margin = 2.0 * sigma + 12.0;
        let span = n as f64 - 2.0 * margin;
        assert!(
            span > 0.0,
            "blob of sigma {sigma} does not fit a {n} px field"
        );
        let spot = (0..100_000)
            .map(|_| {
                (
                    margin + rng.gen::<f64>() * span,
                    margin + rng.gen::<f64>() * span,
                )
            })
            .find(|&(x, y)| {
                placed
                    .iter()
                    .all(|b| (b.x - x).hypot(b.y - y) > 3.0 * (b.sigma + sigma))
            })
            .unwrap_or_else(|| panic!("no room for blob of sigma {sigma}"));
        let amplitude = if placed.len().is_multiple_of(2) {
            0.4
        } else {
            -0.4
        };
        placed.push(Blob {
            x: spot.0,
            y: spot.1,
            sigma,
            amplitude,
        });
    }
    (render(n, n, 0.5, &placed), placed)
}

/// Smooth step through the centre, normal at `angle` (array coordinates):
/// `0.2 + 0.6 / (1 + exp(-d / width))`.
pub fn step_edge(n: usize, angle: f64, width: f64) -> Image {
    let (s, c) = angle.sin_cos();
    let mid = n as f64 / 2.0;
    Image::from_raster_clamped(Raster::from_fn(n, n, |x, y| {
        let d = (x as f64 - mid) * c + (y as f64 - mid) * s;
        0.2 + 0.6 / (1.0 + (-d / width).exp())
    }))
}

/// Random anisotropic blobs of both polarities: a textured scene with many
/// well-localized structures.
pub fn textured_scene(w: usize, h: usize, count: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<[f64; 6]> = (0..count)
        .map(|_| {
            [
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(1.5..6.0),
                rng.gen_range(1.0..2.5),
                rng.gen_range(0.0..std::f64::consts::PI),
                rng.gen_range(-0.35..0.35),
            ]
        })
        .collect();
    Image::from_raster_clamped(Raster::from_fn(w, h, |x, y| {
        0.5 + blobs
            .iter()
            .map(|&[bx, by, s, e, t, a]| {
                let (dx, dy) = (x as f64 - bx, y as f64 - by);
                let u = dx * t.cos() + dy * t.sin();
                let v = -dx * t.sin() + dy * t.cos();
                a * (-(u * u) / (2.0 * s * s * e * e) - v * v / (2.0 * s * s)).exp()
            })
            .sum::<f64>()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_field_is_seeded_and_separated() {
        let (a, blobs) = blob_field(256, 8, 2.0, 2.0, 7);
        let (b, _) = blob_field(256, 8, 2.0, 2.0, 7);
        assert_eq!(a, b);
        assert_eq!(blobs.len(), 8);
        assert!((blobs[0].sigma - 8.0).abs() < 1e-12);
        for (i, p) in blobs.iter().enumerate() {
            for q in &blobs[i + 1..] {
                assert!((p.x - q.x).hypot(p.y - q.y) > 3.0 * (p.sigma + q.sigma));
            }
        }
    }

    #[test]
    fn step_edge_profile() {
        let img = step_edge(64, 0.0, 1.0);
        assert!((img.get(32, 10) - 0.5).abs() < 1e-12);
        assert!(img.get(0, 5) < 0.21 && img.get(63, 5) > 0.79);
    }
}

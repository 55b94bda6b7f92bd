use std::f64::consts::PI;

use shearblob::image::Raster;
use shearblob::theory::*;

/// Golden-section maximum of a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[test]
fn closed_form_peaks_match_search() {
    for alpha in [0.05, 0.3, 1.0, 2.0] {
        let (x, v) = golden_max(|a| bmax_theoretical(a, alpha), 1e-3, 10.0 / alpha);
        assert!((x - bmax_argmax(alpha)).abs() < 1e-6 * x.max(1.0));
        assert!((v - bmax_peak()).abs() < 1e-6);
        assert!((bmax_peak() - 1.0 / (2.0 * PI * PI * 1f64.exp())).abs() < 1e-15);
        for beta in [0.0, 0.5 * alpha, 2.0 * alpha] {
            let (x, v) = golden_max(
                |a| laplacian_max_theoretical(a, alpha, beta),
                1e-3,
                10.0 / alpha,
            );
            assert!((x - laplacian_argmax(alpha, beta)).abs() < 1e-6 * x.max(1.0));
            assert!((v - laplacian_peak()).abs() < 1e-6);
        }
    }
}

#[test]
fn isotropic_sweep_steps_one_scale_per_octave() {
    let s = sinusoid_sweep(512, 7, 4, 4, 1.0).unwrap();
    assert_eq!(s.curves.len(), 4);
    assert!(s.peak_spread < 0.10, "spread {}", s.peak_spread);
    assert!(s.step_error <= 0.25, "step {}", s.step_error);
}

#[test]
fn anisotropic_sweep_steps_one_scale_per_octave() {
    let s = sinusoid_sweep(512, 7, 2, 4, 2.0).unwrap();
    assert!(s
        .curves
        .iter()
        .all(|c| (c.beta - 2.0 * c.alpha).abs() < 1e-12));
    assert!(s.peak_spread < 0.10, "spread {}", s.peak_spread);
    assert!(s.step_error <= 0.25, "step {}", s.step_error);
}

#[test]
fn dilation_leaves_blob_measure_unchanged() {
    for (sx, sy, t) in [(3.0, 3.0, 0.0), (6.0, 3.6, 0.4), (10.0, 4.0, 1.2)] {
        let raw = SyntheticSpec::gaussian(256, 256, sx, sy, t).raw().unwrap();
        let dev = scale_invariance_check(&band_limit_half(&raw).unwrap(), 5).unwrap();
        assert!(dev < 0.15, "sigma {sx}x{sy}: {dev}");
    }
}

#[test]
fn constant_image_checks_to_zero() {
    assert_eq!(
        scale_invariance_check(&Raster::from_fn(128, 128, |_, _| 0.4), 4).unwrap(),
        0.0
    );
}

#[test]
fn sweep_rejects_aliased_frequencies() {
    assert!(sinusoid_sweep(64, 3, 16, 3, 1.0).is_err());
    assert!(sinusoid_sweep(512, 7, 4, 0, 1.0).is_err());
}

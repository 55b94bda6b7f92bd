use shearblob::detector::{
    b_measure, detect, detect_from_coefficients, edge_test, Candidate, DetectParams, EdgeThreshold,
    Threshold,
};
use shearblob::image::{Image, Raster};
use shearblob::synthetic::{blob_field, step_edge, textured_scene};
use shearblob::ShearletSystem;

/// Blobs found within 2 px and with `s` within half an octave of sigma.
fn recovered(kps: &[shearblob::Keypoint], blobs: &[shearblob::synthetic::Blob]) -> usize {
    blobs
        .iter()
        .filter(|b| {
            kps.iter()
                .filter(|k| (k.x - b.x).hypot(k.y - b.y) <= 2.0)
                .max_by(|p, q| p.response.abs().total_cmp(&q.response.abs()))
                .is_some_and(|k| (k.s / b.sigma).log2().abs() <= 0.5)
        })
        .count()
}

#[test]
fn blob_field_centres_and_scales() {
    for seed in [1, 2] {
        let (img, blobs) = blob_field(512, 20, 3.0, 3.0, seed);
        let kps = detect(&img, &DetectParams::default()).unwrap();
        assert!(recovered(&kps, &blobs) >= 18, "seed {seed}");
    }
}

#[test]
fn blank_image_has_no_keypoints() {
    let img = Image::constant(128, 128, 0.3).unwrap();
    assert!(detect(&img, &DetectParams::default()).unwrap().is_empty());
}

/// Lattice points on the ridge of `|B|` across a step edge, one per row and
/// interior scale.
fn ridge_points(img: &Image, j0: usize) -> (shearblob::ShearletCoefficients, Vec<Candidate>) {
    let n = img.width();
    let coeffs = ShearletSystem::new(n, n, j0)
        .unwrap()
        .transform(img)
        .unwrap();
    let b = b_measure(&coeffs);
    let mut pts = Vec::new();
    for j in 1..j0 - 1 {
        for y in (n / 6..n - n / 6).step_by(3) {
            let x = (n / 6..n - n / 6)
                .max_by(|&p, &q| b.get(j, p, y).abs().total_cmp(&b.get(j, q, y).abs()))
                .unwrap();
            pts.push(Candidate { x, y, j });
        }
    }
    (coeffs, pts)
}

#[test]
fn step_edges_are_rejected() {
    for deg in [0.0f64, 20.0, 45.0, 70.0] {
        let img = step_edge(256, deg.to_radians(), 0.7);
        let (coeffs, pts) = ridge_points(&img, 5);
        let kept = edge_test(&coeffs, &pts, EdgeThreshold::default())
            .iter()
            .filter(|e| e.1)
            .count();
        assert!(
            kept as f64 <= 0.1 * pts.len() as f64,
            "{deg} deg: {kept}/{} kept",
            pts.len()
        );
    }
}

#[test]
fn blob_centre_beats_edge_in_spread() {
    let n = 128;
    let blob = Image::from_raster_clamped(Raster::from_fn(n, n, |x, y| {
        0.2 + 0.6 * (-((x as f64 - 64.0).powi(2) + (y as f64 - 64.0).powi(2)) / 32.0).exp()
    }));
    let edge = step_edge(n, 0.0, 0.7);
    // the blob's selected scale is j = 2 (s close to 4); on the edge, take the
    // ridge of |B| along the row rather than the zero crossing
    let eps = |img: &Image| {
        let c = ShearletSystem::new(n, n, 4)
            .unwrap()
            .transform(img)
            .unwrap();
        let b = b_measure(&c);
        let x = (8..n - 8)
            .max_by(|&p, &q| b.get(2, p, 64).abs().total_cmp(&b.get(2, q, 64).abs()))
            .unwrap();
        shearblob::detector::edge_response(&c, x, 64, 2)
    };
    assert!(eps(&edge) > eps(&blob));
}

#[test]
fn quarter_turn_repeats_keypoints() {
    let (w, h) = (384, 320);
    let img = textured_scene(w, h, 180, 4);
    let p = DetectParams::default();
    let k1 = detect(&img, &p).unwrap();
    let k2 = detect(img.rotated90(), &p).unwrap();
    let top: Vec<_> = k1.iter().take(100).collect();
    assert!(top.len() >= 50);
    let hits = top
        .iter()
        .filter(|k| {
            let (ex, ey) = ((h - 1) as f64 - k.y, k.x);
            k2.iter().any(|q| (q.x - ex).hypot(q.y - ey) <= 2.0)
        })
        .count();
    assert!(hits * 10 >= top.len() * 8, "{hits}/{}", top.len());
}

#[test]
fn halving_the_image_moves_one_scale() {
    let (img, blobs) = blob_field(512, 12, 5.0, 1.5, 9);
    let half = Image::from_raster_clamped(img.as_raster().fourier_decimate2().unwrap());
    let p = DetectParams {
        j0: Some(6),
        ..DetectParams::default()
    };
    let k1 = detect(&img, &p).unwrap();
    let k2 = detect(&half, &p).unwrap();
    let mut diffs = Vec::new();
    for b in &blobs {
        let near = |kps: &[shearblob::Keypoint], x: f64, y: f64, r: f64| {
            kps.iter()
                .filter(|k| (k.x - x).hypot(k.y - y) <= r)
                .max_by(|p, q| p.response.abs().total_cmp(&q.response.abs()))
                .copied()
        };
        if let (Some(a), Some(c)) = (
            near(&k1, b.x, b.y, 2.0),
            near(&k2, b.x / 2.0, b.y / 2.0, 1.5),
        ) {
            diffs.push(c.jfrac - a.jfrac);
        }
    }
    assert!(diffs.len() >= 10);
    for d in diffs {
        assert!((d - 1.0).abs() <= 0.25, "jfrac shift {d}");
    }
}

#[test]
fn contrast_scaling_keeps_positions() {
    let img = textured_scene(256, 256, 60, 2);
    let sys = ShearletSystem::new(256, 256, 5).unwrap();
    let c1 = sys.transform(&img).unwrap();
    let dim = Raster::from_fn(256, 256, |x, y| 0.25 * img.get(x, y));
    let c2 = sys.transform(&dim).unwrap();
    let p1 = DetectParams {
        threshold: Threshold::Absolute(1e-3),
        edge_threshold: EdgeThreshold::Absolute(1e-4),
        ..DetectParams::default()
    };
    let p2 = DetectParams {
        threshold: Threshold::Absolute(0.25e-3),
        edge_threshold: EdgeThreshold::Absolute(0.0625e-4),
        ..DetectParams::default()
    };
    let k1 = detect_from_coefficients(&c1, &p1);
    let k2 = detect_from_coefficients(&c2, &p2);
    assert_eq!(k1.len(), k2.len());
    for (a, b) in k1.iter().zip(&k2) {
        assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        assert!((0.25 * a.response - b.response).abs() < 1e-12);
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let img = textured_scene(256, 256, 80, 5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| detect(&img, &DetectParams::default()).unwrap())
    };
    let one = run(1);
    assert!(!one.is_empty());
    assert_eq!(one, run(4));
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shearblob::detector::b_volume;
use shearblob::fourier::{dft2, idft2_real};
use shearblob::image::Raster;
use shearblob::ShearletSystem;

fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Raster::from_fn(w, h, |_, _| rng.gen::<f64>())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (64usize..=256, 64usize..=256)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn circular_shift_commutes((w, h) in dims(), dx in -40isize..40, dy in -40isize..40, seed in any::<u64>()) {
        let img = random_raster(w, h, seed);
        let sys = ShearletSystem::with_default_scales(w, h).unwrap();
        let c = sys.transform(&img).unwrap();
        let cs = sys.transform(img.shifted(dx, dy)).unwrap();
        for (p, q) in c.planes().iter().zip(cs.planes()) {
            let shifted = Raster::new(w, h, p.clone()).unwrap().shifted(dx, dy);
            prop_assert!(max_abs_diff(shifted.data(), q) <= 1e-10 * max_abs(p).max(1e-300));
        }
    }

    #[test]
    fn linear_and_blind_to_constants((w, h) in dims(), a in -2.0f64..2.0, b in -2.0f64..2.0, k in -5.0f64..5.0, seed in any::<u64>()) {
        let (f, g) = (random_raster(w, h, seed), random_raster(w, h, seed ^ 0x9e37));
        let sys = ShearletSystem::with_default_scales(w, h).unwrap();
        let (cf, cg) = (sys.transform(&f).unwrap(), sys.transform(&g).unwrap());
        let mix = Raster::from_fn(w, h, |x, y| a * f.get(x, y) + b * g.get(x, y));
        let cm = sys.transform(&mix).unwrap();
        let cdc = sys.transform(f.map(|v| v + k)).unwrap();
        for i in 0..cf.planes().len() {
            let (pf, pg) = (&cf.planes()[i], &cg.planes()[i]);
            let want: Vec<f64> = pf.iter().zip(pg).map(|(x, y)| a * x + b * y).collect();
            let scale = max_abs(pf).max(max_abs(pg)).max(1e-300) * (a.abs() + b.abs()).max(1.0);
            prop_assert!(max_abs_diff(&want, &cm.planes()[i]) <= 1e-10 * scale);
            prop_assert!(max_abs_diff(pf, &cdc.planes()[i]) <= 1e-10 * max_abs(pf).max(1e-300) * (1.0 + k.abs()));
        }
    }

    #[test]
    fn imaginary_residue_negligible((w, h) in dims(), seed in any::<u64>()) {
        let img = random_raster(w, h, seed);
        let sys = ShearletSystem::with_default_scales(w, h).unwrap();
        prop_assert!(sys.max_imaginary_residue(&img).unwrap() < 1e-8);
    }

    #[test]
    fn dft_round_trip_and_plancherel((w, h) in dims(), seed in any::<u64>()) {
        let img = random_raster(w, h, seed);
        let spec = dft2(&img);
        let (back, ratio) = idft2_real(&spec);
        prop_assert!(ratio < 1e-10);
        prop_assert!(max_abs_diff(&back, img.data()) < 1e-10 * max_abs(img.data()));
        let e_space: f64 = img.data().iter().map(|v| v * v).sum();
        let e_freq: f64 = spec.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / (w * h) as f64;
        prop_assert!((e_space - e_freq).abs() < 1e-10 * e_space);
    }
}

#[test]
fn constant_image_has_no_response() {
    let sys = ShearletSystem::new(96, 80, 3).unwrap();
    let c = sys.transform(Raster::from_fn(96, 80, |_, _| 0.7)).unwrap();
    assert!(c.planes().iter().all(|p| max_abs(p) < 1e-10));
}

#[test]
fn fast_blob_measure_tracks_the_transform() {
    let img = random_raster(128, 96, 3);
    let sys = ShearletSystem::new(128, 96, 4).unwrap();
    let slow = shearblob::detector::b_measure(&sys.transform(&img).unwrap());
    let fast = b_volume(&sys, &img).unwrap();
    for j in 0..4 {
        assert!(max_abs_diff(slow.scale(j), fast.scale(j)) <= 1e-10 * max_abs(slow.scale(j)));
    }
}

#[test]
fn concurrent_transforms_share_one_system() {
    let sys = ShearletSystem::new(128, 128, 4).unwrap();
    let imgs: Vec<Raster> = (0..4).map(|s| random_raster(128, 128, s)).collect();
    let serial: Vec<_> = imgs.iter().map(|i| sys.transform(i).unwrap()).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = imgs
            .iter()
            .map(|i| {
                let sys = &sys;
                s.spawn(move || sys.transform(i).unwrap())
            })
            .collect();
        for (h, want) in handles.into_iter().zip(&serial) {
            assert_eq!(h.join().unwrap().planes(), want.planes());
        }
    });
}

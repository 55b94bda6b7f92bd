//! End-to-end runs over image pairs and datasets: detect, describe, match,
//! score, and turn the results into JSON reports and CSV tables.
//!
//! Two dataset layouts are understood:
//!
//! * Oxford sequence: `img1.*` .. `imgN.*` plus `H1to2p` .. `H1toNp`; every
//!   image is compared with `img1`.
//! * Distortion sweep: `reference/` holds originals, every other
//!   subdirectory is one distortion level (sorted by name) holding images
//!   with the same file names. Pairs are related by the identity.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::descriptor::{describe_all, descriptor_len, Descriptor};
use crate::detector::{b_measure, detect_in, Keypoint};
use crate::error::{Error, Result};
use crate::formats::fmt_num;
use crate::homography::Homography;
use crate::image::{load_image, Image};
use crate::matching::{evaluate_pair, EvalReport};
use crate::system::ShearletSystem;

pub const IMAGE_EXTENSIONS: &[&str] = &["pgm", "ppm", "png", "jpg", "jpeg"];

/// Detection and description output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub width: usize,
    pub height: usize,
    pub j0: usize,
    /// Everything the detector returned.
    pub keypoints: Vec<Keypoint>,
    /// The keypoints that admit a descriptor, in detector order.
    pub described: Vec<(Keypoint, Descriptor)>,
}

impl Features {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dropped(&self) -> usize {
        self.keypoints.len() - self.described.len()
    }
}

fn described(image: &Image, cfg: &RunConfig, given: Option<&[Keypoint]>) -> Result<Features> {
    let (w, h) = image.dims();
    let j0 = cfg.detect_params().resolve_j0(w, h);
    let coeffs = ShearletSystem::new(w, h, j0)?.transform(image)?;
    let keypoints = match given {
        Some(k) => k.to_vec(),
        None => detect_in(&coeffs, &b_measure(&coeffs), &cfg.detect_params()),
    };
    let described = describe_all(&coeffs, &keypoints, &cfg.descriptor_params())?;
    Ok(Features {
        width: w,
        height: h,
        j0,
        keypoints,
        described,
    })
}

/// Detects and describes, sharing one transform.
pub fn extract(image: &Image, cfg: &RunConfig) -> Result<Features> {
    described(image, cfg, None)
}

/// Describes caller-supplied keypoints; those too close to the border or on
/// a flat patch are dropped.
pub fn describe_keypoints(
    image: &Image,
    keypoints: &[Keypoint],
    cfg: &RunConfig,
) -> Result<Features> {
    described(image, cfg, Some(keypoints))
}

pub fn descriptor_dim(cfg: &RunConfig) -> usize {
    descriptor_len(cfg.c)
}

/// Metrics for one image pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub name: String,
    pub image_a: String,
    pub image_b: String,
    pub j0_a: usize,
    pub j0_b: usize,
    pub described_a: usize,
    pub described_b: usize,
    pub metrics: EvalReport,
}

pub fn evaluate_features(
    name: &str,
    a: (&str, &Features),
    b: (&str, &Features),
    h: &Homography,
    cfg: &RunConfig,
) -> Result<PairReport> {
    let (fa, fb) = (a.1, b.1);
    let metrics = evaluate_pair(
        &fa.described,
        &fb.described,
        h,
        fa.dims(),
        fb.dims(),
        &cfg.eval_params(),
    )?;
    Ok(PairReport {
        name: name.to_string(),
        image_a: a.0.to_string(),
        image_b: b.0.to_string(),
        j0_a: fa.j0,
        j0_b: fb.j0,
        described_a: fa.described.len(),
        described_b: fb.described.len(),
        metrics,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Two images related by `h` (A -> B).
pub fn match_images(a: &Path, b: &Path, h: &Homography, cfg: &RunConfig) -> Result<PairReport> {
    let (ia, ib) = (load_image(a)?, load_image(b)?);
    let (fa, fb) = rayon::join(|| extract(&ia, cfg), || extract(&ib, cfg));
    let (na, nb) = (file_name(a), file_name(b));
    evaluate_features(&format!("{na}-{nb}"), (&na, &fa?), (&nb, &fb?), h, cfg)
}

fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|e| dir.join(format!("{stem}.{e}")))
        .find(|p| p.is_file())
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// `img1..imgN` with `H1to{n}p` for every `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub images: Vec<PathBuf>,
    /// `homographies[i]` maps `img1` to `images[i + 1]`.
    pub homographies: Vec<Homography>,
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let mut images = Vec::new();
    let mut homographies = Vec::new();
    while let Some(p) = find_image(dir, &format!("img{}", images.len() + 1)) {
        let n = images.len() + 1;
        if n >= 2 {
            let hp = dir.join(format!("H1to{n}p"));
            if !hp.is_file() {
                return Err(Error::InvalidParameter(format!(
                    "missing homography file {}",
                    hp.display()
                )));
            }
            homographies.push(Homography::load(&hp)?);
        }
        images.push(p);
    }
    if images.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{} holds no Oxford sequence (need img1 and img2)",
            dir.display()
        )));
    }
    Ok(Sequence {
        images,
        homographies,
    })
}

/// `(level name, image paths)` per level plus the reference images.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLayout {
    pub reference: Vec<PathBuf>,
    pub levels: Vec<(String, Vec<PathBuf>)>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

pub fn is_sweep_layout(dir: &Path) -> bool {
    dir.join("reference").is_dir()
}

pub fn load_sweep(dir: &Path) -> Result<SweepLayout> {
    let ref_dir = dir.join("reference");
    let reference: Vec<PathBuf> = sorted_entries(&ref_dir)?
        .into_iter()
        .filter(|p| is_image(p))
        .collect();
    if reference.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no images in {}",
            ref_dir.display()
        )));
    }
    let mut levels = Vec::new();
    for sub in sorted_entries(dir)? {
        if !sub.is_dir() || sub == ref_dir {
            continue;
        }
        let stems: Vec<PathBuf> = sorted_entries(&sub)?
            .into_iter()
            .filter(|p| is_image(p))
            .collect();
        let paths = reference
            .iter()
            .map(|r| {
                let stem = r.file_stem().unwrap().to_string_lossy();
                stems
                    .iter()
                    .find(|p| p.file_stem().is_some_and(|s| s.to_string_lossy() == stem))
                    .cloned()
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "{} has no image for {stem}",
                            sub.display()
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push((file_name(&sub), paths));
    }
    if levels.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} has no distortion levels",
            dir.display()
        )));
    }
    Ok(SweepLayout { reference, levels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub images: usize,
    pub mean_repeatability: f64,
    pub mean_matching_score: f64,
    pub pairs: Vec<PairReport>,
}

/// Everything a `bench` run produces. The resolved configuration is
/// embedded so a report documents how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BenchReport {
    Sequence {
        version: String,
        config: RunConfig,
        pairs: Vec<PairReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        elapsed_seconds: Option<f64>,
    },
    Sweep {
        version: String,
        config: RunConfig,
        levels: Vec<LevelReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        elapsed_seconds: Option<f64>,
    },
}

fn load_all(paths: &[PathBuf], cfg: &RunConfig) -> Result<Vec<Features>> {
    paths
        .par_iter()
        .map(|p| load_image(p).and_then(|img| extract(&img, cfg)))
        .collect()
}

fn elapsed(cfg: &RunConfig, t: Instant) -> Option<f64> {
    (!cfg.deterministic).then(|| t.elapsed().as_secs_f64())
}

pub fn bench_sequence(seq: &Sequence, cfg: &RunConfig) -> Result<BenchReport> {
    let t = Instant::now();
    let feats = load_all(&seq.images, cfg)?;
    let names: Vec<String> = seq.images.iter().map(|p| file_name(p)).collect();
    let pairs = (1..feats.len())
        .into_par_iter()
        .map(|i| {
            evaluate_features(
                &format!("1-{}", i + 1),
                (&names[0], &feats[0]),
                (&names[i], &feats[i]),
                &seq.homographies[i - 1],
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport::Sequence {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        pairs,
        elapsed_seconds: elapsed(cfg, t),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn bench_sweep(layout: &SweepLayout, cfg: &RunConfig) -> Result<BenchReport> {
    let t = Instant::now();
    let refs = load_all(&layout.reference, cfg)?;
    let mut levels = Vec::with_capacity(layout.levels.len());
    for (level, paths) in &layout.levels {
        let feats = load_all(paths, cfg)?;
        let pairs = refs
            .par_iter()
            .zip(&feats)
            .enumerate()
            .map(|(i, (fa, fb))| {
                if fa.dims() != fb.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: fa.dims(),
                        got: fb.dims(),
                    });
                }
                let (na, nb) = (file_name(&layout.reference[i]), file_name(&paths[i]));
                evaluate_features(
                    &format!("{level}/{nb}"),
                    (&na, fa),
                    (&nb, fb),
                    &Homography::identity(),
                    cfg,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelReport {
            level: level.clone(),
            images: pairs.len(),
            mean_repeatability: mean(pairs.iter().map(|p| p.metrics.repeatability)),
            mean_matching_score: mean(pairs.iter().map(|p| p.metrics.matching_score)),
            pairs,
        });
    }
    Ok(BenchReport::Sweep {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        levels,
        elapsed_seconds: elapsed(cfg, t),
    })
}

/// Dispatches on the directory layout.
pub fn bench_dir(dir: &Path, cfg: &RunConfig) -> Result<BenchReport> {
    if is_sweep_layout(dir) {
        bench_sweep(&load_sweep(dir)?, cfg)
    } else {
        bench_sequence(&load_sequence(dir)?, cfg)
    }
}

fn csv(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn pair_row(p: &PairReport) -> Vec<String> {
    let m = &p.metrics;
    vec![
        p.name.clone(),
        fmt_num(m.repeatability),
        fmt_num(m.matching_score),
        m.correspondences.to_string(),
        m.correct_matches.to_string(),
        m.false_matches.to_string(),
    ]
}

pub const PAIR_CSV_HEADER: &str = "pair,repeatability,matching_score,correspondences,correct,false";
pub const PR_CSV_HEADER: &str = "pair,recall,one_minus_precision";
pub const LEVEL_CSV_HEADER: &str = "level,matching_score,repeatability,images";

pub fn pairs_csv(pairs: &[PairReport]) -> String {
    csv(PAIR_CSV_HEADER, pairs.iter().map(pair_row))
}

pub fn pr_csv(pairs: &[PairReport]) -> String {
    csv(
        PR_CSV_HEADER,
        pairs.iter().flat_map(|p| {
            p.metrics
                .pr
                .iter()
                .map(|&(r, f)| vec![p.name.clone(), fmt_num(r), fmt_num(f)])
        }),
    )
}

pub fn levels_csv(levels: &[LevelReport]) -> String {
    csv(
        LEVEL_CSV_HEADER,
        levels.iter().map(|l| {
            vec![
                l.level.clone(),
                fmt_num(l.mean_matching_score),
                fmt_num(l.mean_repeatability),
                l.images.to_string(),
            ]
        }),
    )
}

impl BenchReport {
    /// `(file name, contents)` of the CSV tables for this report.
    pub fn csv_files(&self) -> Vec<(&'static str, String)> {
        match self {
            BenchReport::Sequence { pairs, .. } => {
                vec![("pairs.csv", pairs_csv(pairs)), ("pr.csv", pr_csv(pairs))]
            }
            BenchReport::Sweep { levels, .. } => {
                let pairs: Vec<PairReport> = levels.iter().flat_map(|l| l.pairs.clone()).collect();
                vec![
                    ("levels.csv", levels_csv(levels)),
                    ("pairs.csv", pairs_csv(&pairs)),
                ]
            }
        }
    }
}

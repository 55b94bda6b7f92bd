//! Descriptor matching and the homography-based evaluation protocol:
//! repeatability, matching score and recall / 1-precision curves.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::detector::Keypoint;
use crate::error::{Error, Result};
use crate::homography::Homography;

/// Measurement region radius in units of the keypoint's pixel scale.
pub const REGION_RADIUS_FACTOR: f64 = 3.0;
/// Sub-pixel grid resolution per axis for rasterized overlap.
pub const OVERLAP_GRID: usize = 100;
pub const DEFAULT_OVERLAP_MAX: f64 = 0.4;

/// Ellipse `{p : (p - c)^T A (p - c) <= 1}`, `A` symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub cx: f64,
    pub cy: f64,
    /// `(a, b, c)` of `a dx^2 + 2 b dx dy + c dy^2 <= 1`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Region {
    pub fn circle(cx: f64, cy: f64, r: f64) -> Region {
        let q = 1.0 / (r * r);
        Region {
            cx,
            cy,
            a: q,
            b: 0.0,
            c: q,
        }
    }

    /// Circle of radius `3 s` around a keypoint.
    pub fn of_keypoint(kp: &Keypoint) -> Region {
        Region::circle(kp.x, kp.y, REGION_RADIUS_FACTOR * kp.s)
    }

    fn shape(&self) -> Matrix2<f64> {
        Matrix2::new(self.a, self.b, self.b, self.c)
    }

    fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.a, self.b, self.c]
            .iter()
            .all(|v| v.is_finite())
            && self.a > 0.0
            && self.det() > 0.0
    }

    pub fn area(&self) -> f64 {
        PI / self.det().sqrt()
    }

    pub fn is_circle(&self) -> bool {
        self.b == 0.0 && self.a == self.c
    }

    /// Radius for circles; equal-area radius otherwise.
    pub fn radius(&self) -> f64 {
        (self.area() / PI).sqrt()
    }

    /// Half-extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let d = self.det();
        ((self.c / d).sqrt(), (self.a / d).sqrt())
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy <= 1.0
    }

    /// Whether the bounding box lies inside `[0, w-1] x [0, h-1]`.
    pub fn inside_frame(&self, width: usize, height: usize) -> bool {
        let (ex, ey) = self.half_extents();
        self.cx - ex >= 0.0
            && self.cy - ey >= 0.0
            && self.cx + ex <= (width - 1) as f64
            && self.cy + ey <= (height - 1) as f64
    }
}

/// Maps a region through `H`, linearized at the region centre.
pub fn project(region: &Region, h: &Homography) -> Option<Region> {
    let (cx, cy) = h.apply(region.cx, region.cy)?;
    let j = h.jacobian(region.cx, region.cy)?;
    let ji = j.try_inverse()?;
    let m = ji.transpose() * region.shape() * ji;
    let out = Region {
        cx,
        cy,
        a: m[(0, 0)],
        b: 0.5 * (m[(0, 1)] + m[(1, 0)]),
        c: m[(1, 1)],
    };
    out.is_valid().then_some(out)
}

/// Keypoint region (circle of radius `3 s`) mapped into the other image.
pub fn project_region(kp: &Keypoint, h: &Homography) -> Option<Region> {
    project(&Region::of_keypoint(kp), h)
}

fn circle_intersection(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let (rs, rl) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    if d <= rl - rs {
        return PI * rs * rs;
    }
    let c1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let c2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * c1.acos() + r2 * r2 * c2.acos() - 0.5 * k.sqrt()
}

/// `1 - |A n B| / |A u B|`.
///
/// Two circles use the closed-form lens area. Anything else is rasterized on
/// a 100x100 grid of cell centres over the union's bounding box.
pub fn overlap_error(ra: &Region, rb: &Region) -> Result<f64> {
    if !ra.is_valid() || !rb.is_valid() {
        return Err(Error::InvalidParameter("degenerate region".into()));
    }
    if ra.is_circle() && rb.is_circle() {
        let (r1, r2) = (ra.radius(), rb.radius());
        let d = (ra.cx - rb.cx).hypot(ra.cy - rb.cy);
        let inter = circle_intersection(r1, r2, d);
        let union = PI * (r1 * r1 + r2 * r2) - inter;
        return Ok((1.0 - inter / union).clamp(0.0, 1.0));
    }
    let (ax, ay) = ra.half_extents();
    let (bx, by) = rb.half_extents();
    let x0 = (ra.cx - ax).min(rb.cx - bx);
    let x1 = (ra.cx + ax).max(rb.cx + bx);
    let y0 = (ra.cy - ay).min(rb.cy - by);
    let y1 = (ra.cy + ay).max(rb.cy + by);
    if ra.cx + ax < rb.cx - bx
        || rb.cx + bx < ra.cx - ax
        || ra.cy + ay < rb.cy - by
        || rb.cy + by < ra.cy - ay
    {
        return Ok(1.0);
    }
    let (sx, sy) = (
        (x1 - x0) / OVERLAP_GRID as f64,
        (y1 - y0) / OVERLAP_GRID as f64,
    );
    let (mut inter, mut union) = (0usize, 0usize);
    for iy in 0..OVERLAP_GRID {
        let y = y0 + (iy as f64 + 0.5) * sy;
        for ix in 0..OVERLAP_GRID {
            let x = x0 + (ix as f64 + 0.5) * sx;
            let (ia, ib) = (ra.contains(x, y), rb.contains(x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: usize,
    pub b: usize,
    pub overlap_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repeatability {
    pub score: f64,
    pub correspondences: Vec<Correspondence>,
    pub visible_a: Vec<usize>,
    pub visible_b: Vec<usize>,
    /// Set when one side has no visible keypoints; `score` is then 0.
    pub no_visible: bool,
}

/// Keypoints of A (resp. B) whose region maps entirely inside the other
/// image, with those regions expressed in B's frame.
struct Visible {
    a: Vec<(usize, Region)>,
    b: Vec<(usize, Region)>,
}

fn visible(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h: &Homography,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
) -> Result<Visible> {
    let hinv = h.inverse();
    let a = kps_a
        .iter()
        .enumerate()
        .filter_map(|(i, kp)| {
            let r = project_region(kp, h)?;
            r.inside_frame(dims_b.0, dims_b.1).then_some((i, r))
        })
        .collect();
    let b = kps_b
        .iter()
        .enumerate()
        .filter_map(|(i, kp)| {
            let back = project_region(kp, &hinv)?;
            back.inside_frame(dims_a.0, dims_a.1)
                .then_some((i, Region::of_keypoint(kp)))
        })
        .collect();
    Ok(Visible { a, b })
}

/// Overlap errors `<= overlap_max` between visible pairs, in B's frame.
fn candidate_pairs(vis: &Visible, overlap_max: f64) -> Vec<Correspondence> {
    let mut out: Vec<Correspondence> = vis
        .a
        .par_iter()
        .flat_map_iter(|(ia, ra)| {
            let (ex, ey) = ra.half_extents();
            let reach_a = ex.max(ey);
            vis.b.iter().filter_map(move |(ib, rb)| {
                let (fx, fy) = rb.half_extents();
                if (ra.cx - rb.cx).hypot(ra.cy - rb.cy) > reach_a + fx.max(fy) {
                    return None;
                }
                // the intersection is at most the smaller area
                let ratio = ra.area().min(rb.area()) / ra.area().max(rb.area());
                if 1.0 - ratio > overlap_max {
                    return None;
                }
                let e = overlap_error(ra, rb).ok()?;
                (e <= overlap_max).then_some(Correspondence {
                    a: *ia,
                    b: *ib,
                    overlap_error: e,
                })
            })
        })
        .collect();
    out.sort_by(|x, y| {
        x.overlap_error
            .total_cmp(&y.overlap_error)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    out
}

fn greedy_one_to_one(pairs: Vec<Correspondence>) -> Vec<Correspondence> {
    let mut used_a = HashSet::new();
    let mut used_b = HashSet::new();
    pairs
        .into_iter()
        .filter(|p| {
            if used_a.contains(&p.a) || used_b.contains(&p.b) {
                return false;
            }
            used_a.insert(p.a);
            used_b.insert(p.b);
            true
        })
        .collect()
}

/// Repeatability score: one-to-one correspondences (greedy by ascending
/// overlap error, at most `overlap_max`) over `min(#visible A, #visible B)`.
pub fn repeatability(
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h: &Homography,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
    overlap_max: f64,
) -> Result<Repeatability> {
    let vis = visible(kps_a, kps_b, h, dims_a, dims_b)?;
    let correspondences = greedy_one_to_one(candidate_pairs(&vis, overlap_max));
    let denom = vis.a.len().min(vis.b.len());
    Ok(Repeatability {
        score: if denom == 0 {
            0.0
        } else {
            correspondences.len() as f64 / denom as f64
        },
        correspondences,
        visible_a: vis.a.iter().map(|v| v.0).collect(),
        visible_b: vis.b.iter().map(|v| v.0).collect(),
        no_visible: denom == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatchStrategy {
    /// All pairs with distance `< tau`.
    Threshold(f64),
    /// Each A descriptor's closest B descriptor.
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    pub strategy: MatchStrategy,
}

fn check_dims(a: &[Descriptor], b: &[Descriptor]) -> Result<()> {
    let n = a.first().or(b.first()).map_or(0, |d| d.len());
    for d in a.iter().chain(b) {
        if d.len() != n {
            return Err(Error::DescriptorDimension(n, d.len()));
        }
    }
    Ok(())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean descriptor matching. Pairs are ordered by `(a, b)`.
pub fn match_descriptors(
    a: &[Descriptor],
    b: &[Descriptor],
    strategy: MatchStrategy,
) -> Result<MatchSet> {
    check_dims(a, b)?;
    let pairs = a
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ia, da)| {
            let row: Vec<Match> = match strategy {
                MatchStrategy::Threshold(tau) => b
                    .iter()
                    .enumerate()
                    .filter_map(|(ib, db)| {
                        let d = euclid(&da.values, &db.values);
                        (d < tau).then_some(Match {
                            a: ia,
                            b: ib,
                            distance: d,
                        })
                    })
                    .collect(),
                MatchStrategy::NearestNeighbor => b
                    .iter()
                    .enumerate()
                    .map(|(ib, db)| Match {
                        a: ia,
                        b: ib,
                        distance: euclid(&da.values, &db.values),
                    })
                    .min_by(|x, y| x.distance.total_cmp(&y.distance).then(x.b.cmp(&y.b)))
                    .into_iter()
                    .collect(),
            };
            row
        })
        .collect();
    Ok(MatchSet { pairs, strategy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub tau: f64,
    pub recall: f64,
    pub one_minus_precision: f64,
    pub correct: usize,
    pub matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Set when there are no correspondences and recall is undefined.
    pub undefined: bool,
}

/// Recall vs 1-precision, sweeping the threshold over the distinct match
/// distances. A point at `tau` counts every match with distance `<= tau`;
/// a match is correct iff `(a, b)` is one of `correspondences`.
pub fn pr_curve(matches: &MatchSet, correspondences: &[(usize, usize)]) -> PrCurve {
    if correspondences.is_empty() {
        return PrCurve {
            points: Vec::new(),
            undefined: true,
        };
    }
    let truth: HashSet<(usize, usize)> = correspondences.iter().copied().collect();
    let mut sorted: Vec<&Match> = matches.pairs.iter().collect();
    sorted.sort_by(|x, y| x.distance.total_cmp(&y.distance));
    let total = truth.len() as f64;
    let mut points = Vec::new();
    let (mut correct, mut n) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let tau = sorted[i].distance;
        while i < sorted.len() && sorted[i].distance == tau {
            n += 1;
            correct += truth.contains(&(sorted[i].a, sorted[i].b)) as usize;
            i += 1;
        }
        points.push(PrPoint {
            tau,
            recall: correct as f64 / total,
            one_minus_precision: (n - correct) as f64 / n as f64,
            correct,
            matches: n,
        });
    }
    PrCurve {
        points,
        undefined: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingScore {
    pub score: f64,
    pub correct: usize,
    pub matches: usize,
    pub no_visible: bool,
}

/// Nearest-neighbour matches among visible keypoints that are ground-truth
/// correspondences, over `min(#visible A, #visible B)`.
pub fn matching_score(
    desc_a: &[Descriptor],
    desc_b: &[Descriptor],
    rep: &Repeatability,
) -> Result<MatchingScore> {
    let va: Vec<Descriptor> = rep.visible_a.iter().map(|&i| desc_a[i].clone()).collect();
    let vb: Vec<Descriptor> = rep.visible_b.iter().map(|&i| desc_b[i].clone()).collect();
    let denom = va.len().min(vb.len());
    if denom == 0 {
        return Ok(MatchingScore {
            score: 0.0,
            correct: 0,
            matches: 0,
            no_visible: true,
        });
    }
    let nn = match_descriptors(&va, &vb, MatchStrategy::NearestNeighbor)?;
    let truth: HashSet<(usize, usize)> = rep.correspondences.iter().map(|c| (c.a, c.b)).collect();
    let correct = nn
        .pairs
        .iter()
        .filter(|m| truth.contains(&(rep.visible_a[m.a], rep.visible_b[m.b])))
        .count();
    Ok(MatchingScore {
        score: correct as f64 / denom as f64,
        correct,
        matches: nn.pairs.len(),
        no_visible: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub overlap_max: f64,
    /// Matcher behind the correct/false match counts.
    pub strategy: MatchStrategy,
}

pub const DEFAULT_TAU: f64 = 0.5;

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            overlap_max: DEFAULT_OVERLAP_MAX,
            strategy: MatchStrategy::Threshold(DEFAULT_TAU),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub keypoints_a: usize,
    pub keypoints_b: usize,
    pub visible_a: usize,
    pub visible_b: usize,
    pub correspondences: usize,
    pub correct_matches: usize,
    pub false_matches: usize,
    pub repeatability: f64,
    pub matching_score: f64,
    /// `(recall, 1 - precision)` samples.
    pub pr: Vec<(f64, f64)>,
    pub no_visible: bool,
    pub pr_undefined: bool,
}

/// Full protocol for one image pair related by `h` (A -> B).
pub fn evaluate_pair(
    a: &[(Keypoint, Descriptor)],
    b: &[(Keypoint, Descriptor)],
    h: &Homography,
    dims_a: (usize, usize),
    dims_b: (usize, usize),
    params: &EvalParams,
) -> Result<EvalReport> {
    let (ka, da): (Vec<Keypoint>, Vec<Descriptor>) = a.iter().cloned().unzip();
    let (kb, db): (Vec<Keypoint>, Vec<Descriptor>) = b.iter().cloned().unzip();
    let rep = repeatability(&ka, &kb, h, dims_a, dims_b, params.overlap_max)?;
    let ms = matching_score(&da, &db, &rep)?;
    let truth: Vec<(usize, usize)> = rep.correspondences.iter().map(|c| (c.a, c.b)).collect();
    let truth_set: HashSet<(usize, usize)> = truth.iter().copied().collect();
    let all = match_descriptors(&da, &db, MatchStrategy::Threshold(f64::INFINITY))?;
    let pr = pr_curve(&all, &truth);
    let chosen = match params.strategy {
        MatchStrategy::Threshold(tau) => all
            .pairs
            .iter()
            .filter(|m| m.distance < tau)
            .copied()
            .collect(),
        nn => match_descriptors(&da, &db, nn)?.pairs,
    };
    let correct = chosen
        .iter()
        .filter(|m| truth_set.contains(&(m.a, m.b)))
        .count();
    Ok(EvalReport {
        keypoints_a: ka.len(),
        keypoints_b: kb.len(),
        visible_a: rep.visible_a.len(),
        visible_b: rep.visible_b.len(),
        correspondences: truth.len(),
        correct_matches: correct,
        false_matches: chosen.len() - correct,
        repeatability: rep.score,
        matching_score: ms.score,
        pr: pr
            .points
            .iter()
            .map(|p| (p.recall, p.one_minus_precision))
            .collect(),
        no_visible: rep.no_visible,
        pr_undefined: pr.undefined,
    })
}

/// Equal-area radius of a region after projection, for reporting.
pub fn projected_radius(kp: &Keypoint, h: &Homography) -> Option<f64> {
    project_region(kp, h).map(|r| r.radius())
}

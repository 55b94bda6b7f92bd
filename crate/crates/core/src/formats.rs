//! Text and JSON file formats for keypoints, regions and descriptors.
//!
//! Every real is written with 9 significant digits (see [`fmt_num`]), so
//! output is reproducible byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::detector::Keypoint;
use crate::error::{Error, Result};
use crate::matching::{Region, REGION_RADIUS_FACTOR};

/// `v` rounded to 9 significant digits.
pub fn sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Shortest text that reads back as [`sig9`]`(v)`.
pub fn fmt_num(v: f64) -> String {
    let r = sig9(v);
    if r == 0.0 {
        // no "-0.0"
        "0.0".into()
    } else {
        // Debug switches to exponent form for very small or large magnitudes
        format!("{r:?}")
    }
}

/// Rounds every number in a JSON tree to 9 significant digits.
pub fn round_json(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                let r = sig9(n.as_f64().unwrap());
                *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Malformed(format!("json: {e}")))?;
    round_json(&mut v);
    let mut s =
        serde_json::to_string_pretty(&v).map_err(|e| Error::Malformed(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn parse_reals(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Malformed(format!("line {lineno}: bad number {t:?}")))
        })
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// One keypoint per line: `x y s theta response epsilon`.
pub fn write_keypoints(kps: &[Keypoint]) -> String {
    let mut s = String::new();
    for k in kps {
        let row = [k.x, k.y, k.s, k.theta, k.response, k.epsilon].map(fmt_num);
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Inverse of [`write_keypoints`]; `jfrac` is recovered from `s` and `j0`.
pub fn parse_keypoints(text: &str, j0: usize) -> Result<Vec<Keypoint>> {
    data_lines(text)
        .map(|(n, line)| {
            let v = parse_reals(line, n)?;
            if v.len() != 6 {
                return Err(Error::Malformed(format!(
                    "line {n}: expected 6 values, found {}",
                    v.len()
                )));
            }
            if !(v[2] > 0.0) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Malformed(format!("line {n}: invalid keypoint")));
            }
            Ok(Keypoint {
                x: v[0],
                y: v[1],
                jfrac: j0 as f64 - v[2].log2(),
                s: v[2],
                theta: v[3],
                response: v[4],
                epsilon: v[5],
            })
        })
        .collect()
}

fn region_row(s: &mut String, k: &Keypoint) {
    let r = REGION_RADIUS_FACTOR * k.s;
    let q = 1.0 / (r * r);
    let _ = write!(
        s,
        "{} {} {} 0 {}",
        fmt_num(k.x),
        fmt_num(k.y),
        fmt_num(q),
        fmt_num(q)
    );
}

/// Oxford region file: `1.0`, count, then `x y a b c` per keypoint with the
/// circle of radius `3 s` written as an ellipse.
pub fn write_regions(kps: &[Keypoint]) -> String {
    let mut s = format!("1.0\n{}\n", kps.len());
    for k in kps {
        region_row(&mut s, k);
        s.push('\n');
    }
    s
}

/// Oxford descriptor file: dimension, count, then
/// `x y a b c d1 .. d_dim` per feature.
pub fn write_descriptors(features: &[(Keypoint, Descriptor)], dim: usize) -> Result<String> {
    let mut s = format!("{dim}\n{}\n", features.len());
    for (k, d) in features {
        if d.len() != dim {
            return Err(Error::DescriptorDimension(dim, d.len()));
        }
        region_row(&mut s, k);
        for v in &d.values {
            s.push(' ');
            s.push_str(&fmt_num(*v));
        }
        s.push('\n');
    }
    Ok(s)
}

/// Contents of an Oxford region or descriptor file.
#[derive(Debug, Clone, PartialEq)]
pub struct OxfordFile {
    pub dim: usize,
    pub regions: Vec<Region>,
    /// Empty rows for region-only files.
    pub descriptors: Vec<Vec<f64>>,
}

/// Reads either flavour. Rows carry 5 values (region only) or `5 + dim`.
pub fn parse_oxford(text: &str) -> Result<OxfordFile> {
    let mut lines = data_lines(text);
    let mut header = |what: &str| -> Result<f64> {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::Malformed(format!("missing {what} line")))?;
        l.parse::<f64>()
            .map_err(|_| Error::Malformed(format!("line {n}: bad {what} {l:?}")))
    };
    let dim = header("dimension")?;
    let count = header("count")?;
    if dim < 0.0 || count < 0.0 || count.fract() != 0.0 {
        return Err(Error::Malformed("bad header".into()));
    }
    let (dim, count) = (dim.round() as usize, count as usize);
    let mut out = OxfordFile {
        dim,
        regions: Vec::with_capacity(count),
        descriptors: Vec::with_capacity(count),
    };
    for (n, line) in lines {
        let v = parse_reals(line, n)?;
        if v.len() != 5 && v.len() != 5 + dim {
            return Err(Error::Malformed(format!(
                "line {n}: expected 5 or {} values, found {}",
                5 + dim,
                v.len()
            )));
        }
        let region = Region {
            cx: v[0],
            cy: v[1],
            a: v[2],
            b: v[3],
            c: v[4],
        };
        if !region.is_valid() {
            return Err(Error::Malformed(format!(
                "line {n}: region is not an ellipse"
            )));
        }
        out.regions.push(region);
        out.descriptors.push(v[5..].to_vec());
    }
    if out.regions.len() != count {
        return Err(Error::Malformed(format!(
            "header announces {count} rows, found {}",
            out.regions.len()
        )));
    }
    Ok(out)
}

/// One described keypoint in the JSON descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f64>,
}

/// JSON alternative to the Oxford descriptor file, with full keypoint
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorFile {
    pub width: usize,
    pub height: usize,
    pub j0: usize,
    pub c: usize,
    pub dim: usize,
    /// Input keypoints that could not be described.
    pub dropped: usize,
    pub features: Vec<FeatureRecord>,
}

impl DescriptorFile {
    pub fn features(&self) -> Vec<(Keypoint, Descriptor)> {
        self.features
            .iter()
            .map(|f| {
                (
                    f.keypoint,
                    Descriptor {
                        values: f.descriptor.clone(),
                        c: self.c,
                    },
                )
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Malformed(format!("descriptor json: {e}")))
    }
}

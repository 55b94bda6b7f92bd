//! Run configuration: every tunable of the pipeline in one place, stored as
//! a flat `key = value` text file.
//!
//! ```text
//! # comments and blank lines are ignored
//! j0 = 6
//! threshold = rel:0.01
//! edge_threshold = rel:0.5
//! c = 4
//! strategy = threshold
//! tau = 0.5
//! ```
//!
//! Unknown and repeated keys are errors. Missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorParams;
use crate::detector::{DetectParams, EdgeThreshold, Threshold};
use crate::error::{Error, Result};
use crate::matching::{EvalParams, MatchStrategy, DEFAULT_OVERLAP_MAX, DEFAULT_TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `None` picks a size-dependent default per image.
    pub j0: Option<usize>,
    pub threshold: Threshold,
    pub edge_threshold: EdgeThreshold,
    pub border: f64,
    pub c: usize,
    pub shear_smoothing: bool,
    /// `threshold` or `nn`; the threshold value is `tau`.
    pub strategy: MatchKind,
    pub tau: f64,
    pub overlap_max: f64,
    pub input: Option<PathBuf>,
    pub keypoints: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// The pipeline has no randomness; when set, reports also leave out
    /// wall-clock timings so that reruns are byte-identical.
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Threshold,
    Nn,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DetectParams::default();
        RunConfig {
            j0: d.j0,
            threshold: d.threshold,
            edge_threshold: d.edge_threshold,
            border: d.border,
            c: DescriptorParams::default().c,
            shear_smoothing: false,
            strategy: MatchKind::Threshold,
            tau: DEFAULT_TAU,
            overlap_max: DEFAULT_OVERLAP_MAX,
            input: None,
            keypoints: None,
            out: None,
            deterministic: true,
        }
    }
}

const KEYS: &[&str] = &[
    "j0",
    "threshold",
    "edge_threshold",
    "border",
    "c",
    "shear_smoothing",
    "strategy",
    "tau",
    "overlap_max",
    "input",
    "keypoints",
    "out",
    "deterministic",
];

fn bad(key: &str, val: &str) -> Error {
    Error::Config(format!("bad value for {key}: {val:?}"))
}

fn num<T: FromStr>(key: &str, val: &str) -> Result<T> {
    val.parse().map_err(|_| bad(key, val))
}

fn opt_path(val: &str) -> Option<PathBuf> {
    (!val.is_empty()).then(|| PathBuf::from(val))
}

impl RunConfig {
    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            j0: self.j0,
            threshold: self.threshold,
            edge_threshold: self.edge_threshold,
            border: self.border,
        }
    }

    pub fn descriptor_params(&self) -> DescriptorParams {
        DescriptorParams {
            c: self.c,
            shear_smoothing: self.shear_smoothing,
        }
    }

    pub fn eval_params(&self) -> EvalParams {
        EvalParams {
            overlap_max: self.overlap_max,
            strategy: self.match_strategy(),
        }
    }

    pub fn match_strategy(&self) -> MatchStrategy {
        match self.strategy {
            MatchKind::Threshold => MatchStrategy::Threshold(self.tau),
            MatchKind::Nn => MatchStrategy::NearestNeighbor,
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, val: &str) -> Result<()> {
        let val = val.trim();
        match key {
            "j0" => {
                self.j0 = match val {
                    "" | "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "threshold" => self.threshold = val.parse().map_err(|_| bad(key, val))?,
            "edge_threshold" => self.edge_threshold = val.parse().map_err(|_| bad(key, val))?,
            "border" => self.border = num(key, val)?,
            "c" => self.c = num(key, val)?,
            "shear_smoothing" => self.shear_smoothing = num(key, val)?,
            "strategy" => {
                self.strategy = match val {
                    "threshold" => MatchKind::Threshold,
                    "nn" => MatchKind::Nn,
                    _ => return Err(bad(key, val)),
                }
            }
            "tau" => self.tau = num(key, val)?,
            "overlap_max" => self.overlap_max = num(key, val)?,
            "input" => self.input = opt_path(val),
            "keypoints" => self.keypoints = opt_path(val),
            "out" => self.out = opt_path(val),
            "deterministic" => self.deterministic = num(key, val)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.border >= 0.0 && self.border.is_finite()) {
            return Err(Error::Config("border must be finite and >= 0".into()));
        }
        if self.c < 4 || !self.c.is_power_of_two() {
            return Err(Error::Config(format!(
                "c must be a power of two >= 4, got {}",
                self.c
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config("tau must be > 0".into()));
        }
        if !(self.overlap_max > 0.0 && self.overlap_max < 1.0) {
            return Err(Error::Config("overlap_max must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Applies a config file on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: repeated key {key:?}",
                    n + 1
                )));
            }
            seen.push(key);
            self.set(key, val)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `(key, value)` in file order; what [`RunConfig::to_text`] writes.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let vals = [
            self.j0.map_or("auto".to_string(), |j| j.to_string()),
            self.threshold.to_string(),
            self.edge_threshold.to_string(),
            self.border.to_string(),
            self.c.to_string(),
            self.shear_smoothing.to_string(),
            match self.strategy {
                MatchKind::Threshold => "threshold".into(),
                MatchKind::Nn => "nn".into(),
            },
            self.tau.to_string(),
            self.overlap_max.to_string(),
            path(&self.input),
            path(&self.keypoints),
            path(&self.out),
            self.deterministic.to_string(),
        ];
        KEYS.iter().copied().zip(vals).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

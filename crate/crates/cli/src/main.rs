use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shearblob::detector::{EdgeThreshold, Threshold};
use shearblob::formats::{self, fmt_num, to_json, DescriptorFile, FeatureRecord};
use shearblob::pipeline::{self, BenchReport, PairReport};
use shearblob::system::default_j0;
use shearblob::theory::{self, SyntheticSpec};
use shearblob::{load_image, Error, Homography, Keypoint, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "shearblob",
    version,
    about = "Shearlet blob detection, description and evaluation"
)]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    cmd: Command,
}

/// Settings that override the config file.
#[derive(Args)]
struct Overrides {
    /// flat key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// number of scales
    #[arg(long, global = true)]
    j0: Option<usize>,
    /// detection threshold, `abs:<t>` or `rel:<fraction of max |B|>`
    #[arg(long, global = true)]
    threshold: Option<Threshold>,
    /// edge threshold, `abs:<t>`, `rel:<ratio>` or `pct:<percentile>`
    #[arg(long, global = true)]
    edge_threshold: Option<EdgeThreshold>,
    /// descriptor orientations per subregion
    #[arg(long, global = true)]
    c: Option<usize>,
    /// descriptor distance threshold
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    overlap_max: Option<f64>,
    /// output directory; results go to stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect blobs; writes `<stem>.kp` and `<stem>.regions`
    Detect {
        image: Option<PathBuf>,
        /// also write `<stem>.kp.json` with metadata
        #[arg(long)]
        json: bool,
    },
    /// Describe detected or given keypoints; writes `<stem>.desc`
    Describe {
        image: Option<PathBuf>,
        /// keypoint text file (`x y s theta response epsilon`)
        #[arg(long)]
        keypoints: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one image pair under a homography file (A -> B)
    Match {
        image_a: PathBuf,
        image_b: PathBuf,
        homography: PathBuf,
    },
    /// Evaluate an Oxford sequence or a distortion-sweep directory
    Bench { dir: Option<PathBuf> },
    /// Scale-selection curves on synthetic signals
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sinusoid,
    Gaussian,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// number of sinusoids, each an octave above the previous
    #[arg(long, default_value_t = 4)]
    alpha_octaves: usize,
    /// periods of the lowest sinusoid across the image; defaults to
    /// `4 / max(1, ratio)`, which keeps every peak inside the scale range of
    /// the default 512 px image
    #[arg(long)]
    q0: Option<usize>,
    /// beta / alpha
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 4.0)]
    sigma: f64,
    /// second axis of the Gaussian; defaults to `sigma`
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
}

fn resolve_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if o.j0.is_some() {
        cfg.j0 = o.j0;
    }
    if let Some(t) = o.threshold {
        cfg.threshold = t;
    }
    if let Some(t) = o.edge_threshold {
        cfg.edge_threshold = t;
    }
    if let Some(c) = o.c {
        cfg.c = c;
    }
    if let Some(t) = o.tau {
        cfg.tau = t;
    }
    if let Some(m) = o.overlap_max {
        cfg.overlap_max = m;
    }
    if o.out.is_some() {
        cfg.out = o.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `name` into the output directory, or to stdout without one.
fn emit(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let p = dir.join(name);
            fs::write(&p, contents).map_err(|e| Error::Io { path: p, source: e })
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn input(arg: Option<PathBuf>, cfg: &RunConfig, what: &str) -> Result<PathBuf> {
    arg.or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given (argument or `input` key)")))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

#[derive(Serialize)]
struct KeypointFile<'a> {
    image: String,
    width: usize,
    height: usize,
    j0: usize,
    count: usize,
    config: &'a RunConfig,
    keypoints: &'a [Keypoint],
}

fn cmd_detect(image: Option<PathBuf>, json: bool, cfg: &RunConfig) -> Result<()> {
    let path = input(image, cfg, "image")?;
    let img = load_image(&path)?;
    let (w, h) = img.dims();
    let params = cfg.detect_params();
    let j0 = params.resolve_j0(w, h);
    let kps = shearblob::detect(&img, &params)?;
    let name = stem(&path);
    let doc = KeypointFile {
        image: name.clone(),
        width: w,
        height: h,
        j0,
        count: kps.len(),
        config: cfg,
        keypoints: &kps,
    };
    if cfg.out.is_none() {
        // stdout carries a single document
        let text = if json {
            to_json(&doc)?
        } else {
            formats::write_keypoints(&kps)
        };
        return emit(cfg, "", &text);
    }
    emit(cfg, &format!("{name}.kp"), &formats::write_keypoints(&kps))?;
    emit(
        cfg,
        &format!("{name}.regions"),
        &formats::write_regions(&kps),
    )?;
    if json {
        emit(cfg, &format!("{name}.kp.json"), &to_json(&doc)?)?;
    }
    eprintln!("{} keypoints (j0 = {j0})", kps.len());
    Ok(())
}

fn cmd_describe(
    image: Option<PathBuf>,
    keypoints: Option<PathBuf>,
    json: bool,
    cfg: &RunConfig,
) -> Result<()> {
    let path = input(image, cfg, "image")?;
    let img = load_image(&path)?;
    let (w, h) = img.dims();
    let j0 = cfg.detect_params().resolve_j0(w, h);
    let feats = match keypoints.or_else(|| cfg.keypoints.clone()) {
        Some(kp) => {
            let text = fs::read_to_string(&kp).map_err(|e| Error::Io {
                path: kp,
                source: e,
            })?;
            pipeline::describe_keypoints(&img, &formats::parse_keypoints(&text, j0)?, cfg)?
        }
        None => pipeline::extract(&img, cfg)?,
    };
    let dim = pipeline::descriptor_dim(cfg);
    let name = stem(&path);
    let doc = DescriptorFile {
        width: w,
        height: h,
        j0,
        c: cfg.c,
        dim,
        dropped: feats.dropped(),
        features: feats
            .described
            .iter()
            .map(|(k, d)| FeatureRecord {
                keypoint: *k,
                descriptor: d.values.clone(),
            })
            .collect(),
    };
    if cfg.out.is_none() {
        let text = if json {
            to_json(&doc)?
        } else {
            formats::write_descriptors(&feats.described, dim)?
        };
        return emit(cfg, "", &text);
    }
    emit(
        cfg,
        &format!("{name}.desc"),
        &formats::write_descriptors(&feats.described, dim)?,
    )?;
    if json {
        emit(cfg, &format!("{name}.desc.json"), &to_json(&doc)?)?;
    }
    eprintln!(
        "{} descriptors, {} keypoints dropped (border or flat support)",
        feats.described.len(),
        feats.dropped()
    );
    Ok(())
}

#[derive(Serialize)]
struct MatchReport<'a> {
    version: &'static str,
    config: &'a RunConfig,
    pair: &'a PairReport,
}

fn cmd_match(a: &Path, b: &Path, h: &Path, cfg: &RunConfig) -> Result<()> {
    let hom = Homography::load(h)?;
    let pair = pipeline::match_images(a, b, &hom, cfg)?;
    let report = MatchReport {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        pair: &pair,
    };
    emit(cfg, "report.json", &to_json(&report)?)?;
    if cfg.out.is_some() {
        let pairs = std::slice::from_ref(&pair);
        emit(cfg, "pairs.csv", &pipeline::pairs_csv(pairs))?;
        emit(cfg, "pr.csv", &pipeline::pr_csv(pairs))?;
    }
    Ok(())
}

fn cmd_bench(dir: Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let dir = input(dir, cfg, "dataset directory")?;
    let report = pipeline::bench_dir(&dir, cfg)?;
    emit(cfg, "report.json", &to_json(&report)?)?;
    if cfg.out.is_some() {
        for (name, text) in report.csv_files() {
            emit(cfg, name, &text)?;
        }
    }
    if let BenchReport::Sweep { levels, .. } = &report {
        for l in levels {
            eprintln!("{}: MS {}", l.level, fmt_num(l.mean_matching_score));
        }
    }
    Ok(())
}

fn curve_csv(a: &[f64], v: &[f64]) -> String {
    let mut s = String::from("a,value\n");
    for (x, y) in a.iter().zip(v) {
        s.push_str(&format!("{},{}\n", fmt_num(*x), fmt_num(*y)));
    }
    s
}

#[derive(Serialize)]
struct CurveSummary {
    alpha: f64,
    beta: f64,
    argmax: f64,
    peak: f64,
    j_star: f64,
    closed_form_argmax: f64,
    closed_form_peak: f64,
}

#[derive(Serialize)]
struct SweepDoc {
    j0: usize,
    size: usize,
    peak_spread: f64,
    step_error: f64,
    curves: Vec<CurveSummary>,
    note: &'static str,
}

fn cmd_theory(t: &TheoryArgs, cfg: &RunConfig) -> Result<()> {
    let j0 = cfg.j0.unwrap_or_else(|| default_j0(t.size, t.size));
    match t.kind {
        Kind::Sinusoid => {
            let q0 =
                t.q0.unwrap_or(((4.0 / t.ratio.max(1.0)).round() as usize).max(1));
            let sweep = theory::sinusoid_sweep(t.size, j0, q0, t.alpha_octaves, t.ratio)?;
            let mut summary =
                String::from("curve,alpha,beta,argmax,peak,j_star,closed_form_argmax\n");
            let mut curves = Vec::new();
            for (i, c) in sweep.curves.iter().enumerate() {
                let dominant = c.alpha.abs().max(c.beta.abs());
                let cs = CurveSummary {
                    alpha: c.alpha,
                    beta: c.beta,
                    argmax: c.curve.argmax,
                    peak: c.curve.peak,
                    j_star: c.j_star,
                    closed_form_argmax: theory::bmax_argmax(dominant),
                    closed_form_peak: theory::bmax_peak(),
                };
                summary.push_str(&format!(
                    "{i},{},{},{},{},{},{}\n",
                    fmt_num(cs.alpha),
                    fmt_num(cs.beta),
                    fmt_num(cs.argmax),
                    fmt_num(cs.peak),
                    fmt_num(cs.j_star),
                    fmt_num(cs.closed_form_argmax)
                ));
                if cfg.out.is_some() {
                    emit(
                        cfg,
                        &format!("bmax_{i}.csv"),
                        &curve_csv(&c.curve.a, &c.curve.values),
                    )?;
                    let scales = theory::log_scales(c.curve.a[0], (j0 - 1).max(1), 8);
                    let lap = theory::theoretical_laplacian_curve(c.alpha, c.beta, &scales)?;
                    emit(
                        cfg,
                        &format!("laplacian_{i}.csv"),
                        &curve_csv(&lap.a, &lap.values),
                    )?;
                }
                curves.push(cs);
            }
            emit(cfg, "summary.csv", &summary)?;
            if cfg.out.is_some() {
                let doc = SweepDoc {
                    j0,
                    size: t.size,
                    peak_spread: sweep.peak_spread,
                    step_error: sweep.step_error,
                    curves,
                    note: theory::ARGMAX_NOTE,
                };
                emit(cfg, "theory.json", &to_json(&doc)?)?;
            }
            eprintln!(
                "peak spread {}, step error {}",
                fmt_num(sweep.peak_spread),
                fmt_num(sweep.step_error)
            );
            eprintln!("note: {}", theory::ARGMAX_NOTE);
        }
        Kind::Gaussian => {
            let spec = SyntheticSpec::gaussian(
                t.size,
                t.size,
                t.sigma,
                t.sigma_y.unwrap_or(t.sigma),
                t.angle,
            );
            let rows = theory::gaussian_decomposition(&spec, j0)?;
            let mut s = String::from("j,a,b_center,max_abs_b\n");
            for (j, a, bc, m) in rows {
                s.push_str(&format!(
                    "{j},{},{},{}\n",
                    fmt_num(a),
                    fmt_num(bc),
                    fmt_num(m)
                ));
            }
            emit(cfg, "decomposition.csv", &s)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.opts)?;
    match cli.cmd {
        Command::Detect { image, json } => cmd_detect(image, json, &cfg),
        Command::Describe {
            image,
            keypoints,
            json,
        } => cmd_describe(image, keypoints, json, &cfg),
        Command::Match {
            image_a,
            image_b,
            homography,
        } => cmd_match(&image_a, &image_b, &homography, &cfg),
        Command::Bench { dir } => cmd_bench(dir, &cfg),
        Command::Theory(t) => cmd_theory(&t, &cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

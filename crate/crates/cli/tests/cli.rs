use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use shearblob::formats::parse_oxford;
use shearblob::image::{save_image, Image};
use shearblob::synthetic::textured_scene;
use shearblob::Homography;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shearblob"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(img: &Image, dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(name);
    save_image(img, &p).unwrap();
    p
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn blank_image_gives_empty_keypoint_file() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        &Image::constant(128, 128, 0.5).unwrap(),
        dir.path(),
        "blank.pgm",
    );
    let out = dir.path().join("out");
    ok(&["detect", s(&img), "--out", s(&out)]);
    assert_eq!(fs::read_to_string(out.join("blank.kp")).unwrap(), "");
    // stdout mode too
    assert!(ok(&["detect", s(&img)]).stdout.is_empty());
}

#[test]
fn detect_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(&textured_scene(192, 160, 60, 3), dir.path(), "scene.pgm");
    // same output directory: the echoed config includes it
    let o1 = dir.path().join("out");
    let read =
        || ["scene.kp", "scene.regions", "scene.kp.json"].map(|f| fs::read(o1.join(f)).unwrap());
    ok(&["detect", s(&img), "--json", "--out", s(&o1)]);
    let first = read();
    ok(&["detect", s(&img), "--json", "--out", s(&o1)]);
    assert!(first.iter().all(|b| !b.is_empty()));
    assert_eq!(first, read());
    let doc = json(&o1.join("scene.kp.json"));
    assert_eq!(
        doc["count"].as_u64().unwrap() as usize,
        doc["keypoints"].as_array().unwrap().len()
    );
    assert!(doc["config"].is_object());
}

#[test]
fn j0_is_echoed_and_range_checked() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        &Image::constant(512, 512, 0.5).unwrap(),
        dir.path(),
        "flat.pgm",
    );
    let out = ok(&["detect", s(&img), "--json", "--j0", "7"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["j0"], 7);
    assert_eq!(doc["config"]["j0"], 7);
    // the largest admissible value for 512 px is 7
    let bad = run(&["detect", s(&img), "--j0", "8"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("out of range"));
}

#[test]
fn describe_writes_oxford_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(&textured_scene(256, 256, 90, 8), dir.path(), "scene.pgm");
    let out = dir.path().join("out");
    ok(&["describe", s(&img), "--c", "4", "--json", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("scene.desc")).unwrap();
    assert_eq!(text.lines().next(), Some("128"));
    let parsed = parse_oxford(&text).unwrap();
    let doc = json(&out.join("scene.desc.json"));
    let feats = doc["features"].as_array().unwrap();
    assert!(!feats.is_empty());
    assert_eq!(parsed.descriptors.len(), feats.len());
    for (row, f) in parsed.descriptors.iter().zip(feats) {
        let want: Vec<f64> = f["descriptor"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(row.len(), 128);
        for (a, b) in row.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
        let k = &f["keypoint"];
        let q = 1.0 / (3.0 * k["s"].as_f64().unwrap()).powi(2);
        let r = parsed.regions[feats.iter().position(|g| std::ptr::eq(g, f)).unwrap()];
        assert!((r.cx - k["x"].as_f64().unwrap()).abs() < 1e-6 && (r.a - q).abs() < 1e-6 * q);
    }
}

#[test]
fn describe_with_no_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(&textured_scene(128, 128, 40, 1), dir.path(), "scene.pgm");
    let kp = dir.path().join("none.kp");
    fs::write(&kp, "").unwrap();
    let out = ok(&["describe", s(&img), "--keypoints", s(&kp)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "128\n0\n");
}

#[test]
fn identical_pair_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(&textured_scene(256, 256, 90, 4), dir.path(), "a.pgm");
    let h = dir.path().join("H");
    fs::write(&h, Homography::identity().to_text()).unwrap();
    let out = dir.path().join("out");
    ok(&["match", s(&img), s(&img), s(&h), "--out", s(&out)]);
    let doc = json(&out.join("report.json"));
    for key in ["version", "config", "pair"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
    let pair = &doc["pair"];
    for key in [
        "name",
        "image_a",
        "image_b",
        "j0_a",
        "j0_b",
        "described_a",
        "described_b",
        "metrics",
    ] {
        assert!(pair.get(key).is_some(), "{key}");
    }
    let m = &pair["metrics"];
    for key in [
        "keypoints_a",
        "keypoints_b",
        "visible_a",
        "visible_b",
        "correspondences",
        "correct_matches",
        "false_matches",
        "repeatability",
        "matching_score",
        "pr",
        "no_visible",
        "pr_undefined",
    ] {
        assert!(m.get(key).is_some(), "{key}");
    }
    assert_eq!(m["repeatability"].as_f64(), Some(1.0));
    assert_eq!(m["matching_score"].as_f64(), Some(1.0));
    assert_eq!(m["correct_matches"], m["correspondences"]);
    let pairs = fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 2);
    assert!(out.join("pr.csv").is_file());
}

#[test]
fn missing_homography_fails() {
    let dir = tempfile::tempdir().unwrap();
    let img = textured_scene(96, 96, 20, 2);
    write(&img, dir.path(), "img1.pgm");
    write(&img, dir.path(), "img2.pgm");
    let out = run(&["bench", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("H1to2p"));
}

#[test]
fn sweep_layout_gives_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("sweep");
    for sub in ["reference", "q90", "q60", "q30"] {
        fs::create_dir_all(root.join(sub)).unwrap();
    }
    for (i, seed) in [5u64, 6].into_iter().enumerate() {
        let img = textured_scene(192, 192, 60, seed);
        let name = format!("im{i}.pgm");
        write(&img, &root.join("reference"), &name);
        for (sub, k) in [("q90", 0.9), ("q60", 0.7), ("q30", 0.5)] {
            let faded = Image::from_raster_clamped(img.as_raster().map(|v| 0.5 + k * (v - 0.5)));
            write(&faded, &root.join(sub), &name);
        }
    }
    let out = dir.path().join("out");
    ok(&["bench", s(&root), "--out", s(&out)]);
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    let rows: Vec<&str> = levels.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",2")));
    let doc = json(&out.join("report.json"));
    assert_eq!(doc["kind"], "sweep");
    assert_eq!(doc["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn theory_sinusoid_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    ok(&[
        "theory",
        "--kind",
        "sinusoid",
        "--alpha-octaves",
        "4",
        "--out",
        s(&out),
    ]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let peaks: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(peaks.len(), 4);
    let mean = peaks.iter().sum::<f64>() / 4.0;
    let spread = (peaks.iter().cloned().fold(f64::MIN, f64::max)
        - peaks.iter().cloned().fold(f64::MAX, f64::min))
        / mean;
    assert!(spread < 0.10);
    for i in 0..4 {
        let curve = fs::read_to_string(out.join(format!("bmax_{i}.csv"))).unwrap();
        assert_eq!(curve.lines().next(), Some("a,value"));
    }
    let doc = json(&out.join("theory.json"));
    assert!(doc["note"].as_str().unwrap().contains("sqrt(2)"));
    // deterministic
    let again = dir.path().join("u");
    ok(&[
        "theory",
        "--kind",
        "sinusoid",
        "--alpha-octaves",
        "4",
        "--out",
        s(&again),
    ]);
    for f in [
        "summary.csv",
        "bmax_2.csv",
        "laplacian_1.csv",
        "theory.json",
    ] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn theory_gaussian_decomposition() {
    let out = ok(&[
        "theory", "--kind", "gaussian", "--size", "128", "--sigma", "3",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,a,b_center,max_abs_b"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), shearblob::system::default_j0(128, 128));
}

#[test]
fn theory_rejects_aliasing() {
    assert!(
        !run(&["theory", "--kind", "sinusoid", "--size", "64", "--q0", "16"])
            .status
            .success()
    );
}

#[test]
fn config_file_is_read_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        &Image::constant(64, 64, 0.5).unwrap(),
        dir.path(),
        "flat.pgm",
    );
    let good = dir.path().join("good.cfg");
    fs::write(&good, "# test\nj0 = 3\nc = 8\n").unwrap();
    let doc: Value =
        serde_json::from_slice(&ok(&["--config", s(&good), "detect", s(&img), "--json"]).stdout)
            .unwrap();
    assert_eq!(doc["j0"], 3);
    assert_eq!(doc["config"]["c"], 8);
    // flags override the file
    let doc: Value = serde_json::from_slice(
        &ok(&[
            "--config",
            s(&good),
            "detect",
            s(&img),
            "--json",
            "--j0",
            "2",
        ])
        .stdout,
    )
    .unwrap();
    assert_eq!(doc["j0"], 2);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "j0 = 3\nsharpness = 2\n").unwrap();
    let out = run(&["--config", s(&bad), "detect", s(&img)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sharpness"));
}

#[test]
fn missing_input_fails_cleanly() {
    let out = run(&["detect", "/nonexistent/image.pgm"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

//! Fixed inputs shared by the benchmarks.

use shearblob::synthetic::textured_scene;
use shearblob::{detect, DetectParams, Image, Keypoint};

/// Square textured scene; the same pixels for a given size on every run.
pub fn scene(n: usize) -> Image {
    textured_scene(n, n, n / 2, 7)
}

pub fn keypoints(image: &Image) -> Vec<Keypoint> {
    detect(image, &DetectParams::default()).expect("bench scene is valid")
}

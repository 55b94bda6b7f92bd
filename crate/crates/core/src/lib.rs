//! Scale-invariant blob detection and local description of grayscale images
//! with the cone-adapted discrete shearlet transform.
//!
//! The pipeline is
//!
//! 1. [`ShearletSystem::transform`]: Fourier-domain filter bank, one real
//!    coefficient raster per (scale, shearing) band;
//! 2. [`detector::detect`]: the per-scale blob response, 3x3x3 extrema,
//!    quadratic refinement, edge rejection and orientation assignment;
//! 3. [`descriptor::describe`]: a rotated, scaled grid of coefficient
//!    statistics;
//! 4. [`matching`]: repeatability, matching score and precision/recall under
//!    ground-truth homographies.
//!
//! [`theory`] holds the synthetic signals and closed-form scale curves used to
//! check scale selection numerically.

pub mod config;
pub mod descriptor;
pub mod detector;
pub mod error;
pub mod formats;
pub mod fourier;
pub mod homography;
pub mod image;
pub mod matching;
pub mod pipeline;
pub mod synthetic;
pub mod system;
pub mod theory;

pub use config::RunConfig;
pub use descriptor::{describe, Descriptor, DescriptorParams};
pub use detector::{detect, BVolume, DetectParams, EdgeThreshold, Keypoint, Threshold};
pub use error::{Error, Result};
pub use homography::Homography;
pub use image::{load_image, save_image, Image, Raster};
pub use system::{ShearletCoefficients, ShearletSystem};

//! Multi-scale 3D Gaussian splatting on the CPU.
//!
//! Fine Gaussians are aggregated into coarser levels of detail, and each
//! render keeps only the Gaussians whose screen footprint matches the range
//! they were trained at. See the README for the pipeline overview.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod image;
pub mod io;
pub mod projection;
pub mod lod;
pub mod optim;
pub mod raster;
pub mod render;
pub mod scene;
pub mod select;
pub mod sh;
pub mod stats;

pub use camera::Camera;
pub use error::{Error, Result};
pub use gaussian::{CoverageRange, Gaussian3D};
pub use image::Image;
pub use projection::{LowPassConfig, Splat2D};
pub use scene::Scene;
pub use stats::RenderStats;

//! Image metrics and the multi-scale benchmark.

pub mod bench;
pub mod metrics;

pub use bench::{bench, BenchConfig, BenchRow};
pub use metrics::{psnr, ssim};

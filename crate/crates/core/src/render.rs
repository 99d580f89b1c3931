//! One-call rendering of a scene at a downsample scale.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::Result;
use crate::image::Image;
use crate::projection::{LowPassConfig, Splat2D};
use crate::raster::rasterize;
use crate::scene::Scene;
use crate::select::{keep, project_filtered, SelectConfig, SelectContext};
use crate::stats::RenderStats;

/// Which Gaussians take part in a render.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Every level-1 Gaussian, no filtering.
    SingleScale,
    /// All levels, filtered by coverage range.
    MultiScale,
    /// Level-1 Gaussians only, filtered by coverage range.
    Ablation,
}

impl RenderMode {
    pub fn name(self) -> &'static str {
        match self {
            RenderMode::SingleScale => "single_scale",
            RenderMode::MultiScale => "multi_scale",
            RenderMode::Ablation => "ablation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub lowpass: LowPassConfig,
    pub select: SelectConfig,
    pub background: Vector3<f64>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            lowpass: LowPassConfig::default(),
            select: SelectConfig::default(),
            background: Vector3::zeros(),
        }
    }
}

pub struct Rendered {
    pub image: Image,
    pub stats: RenderStats,
    pub splats: Vec<Splat2D>,
}

/// Projects the splats a render would rasterize. `cam` is already scaled.
pub fn gather(
    scene: &Scene,
    cam: &Camera,
    scale: u32,
    mode: RenderMode,
    settings: &RenderSettings,
) -> (Vec<Splat2D>, RenderStats) {
    let ctx = SelectContext::new(scene, scale);
    let cfg = &settings.select;
    let lp = &settings.lowpass;
    match mode {
        RenderMode::SingleScale => project_filtered(scene, cam, lp, |g| g.level == 1, |_, _| true),
        RenderMode::MultiScale => project_filtered(scene, cam, lp, |_| true, |g, s| keep(cfg, &ctx, g.level, g.coverage, s)),
        RenderMode::Ablation => project_filtered(scene, cam, lp, |g| g.level == 1, |g, s| keep(cfg, &ctx, g.level, g.coverage, s)),
    }
}

/// Renders `cam` (full resolution) downsampled by `scale`. The reported
/// wall time covers projection, selection and rasterization.
pub fn render(scene: &Scene, cam: &Camera, scale: u32, mode: RenderMode, settings: &RenderSettings) -> Result<Rendered> {
    let cam = cam.at_scale(scale)?;
    let start = Instant::now();
    let (splats, sel) = gather(scene, &cam, scale, mode, settings);
    let (image, mut stats) = rasterize(&splats, &cam, &settings.background)?;
    stats.wall_time = start.elapsed().as_secs_f64();
    stats.num_splatted = sel.num_splatted;
    stats.num_selected = sel.num_selected;
    Ok(Rendered { image, stats, splats })
}

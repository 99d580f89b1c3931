//! Loss gradients with respect to Gaussian parameters for one view.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianGrad;
use crate::image::Image;
use crate::projection::{project_backward, Splat2D, SplatGrad};
use crate::raster::{rasterize, rasterize_backward};
use crate::render::{gather, RenderMode, RenderSettings};
use crate::scene::Scene;
use crate::stats::RenderStats;

pub struct StepOutput {
    pub loss: f64,
    pub image: Image,
    pub stats: RenderStats,
    pub splats: Vec<Splat2D>,
    /// Per rendered splat, in `splats` order.
    pub splat_grads: Vec<SplatGrad>,
    /// Per scene Gaussian; `None` for Gaussians that were not rendered.
    pub grads: Vec<Option<GaussianGrad>>,
}

/// Renders `cam` (already at `scale`), compares against `truth` and
/// back-propagates the loss to every rendered Gaussian.
pub fn forward_backward(
    scene: &Scene,
    cam: &Camera,
    scale: u32,
    mode: RenderMode,
    settings: &RenderSettings,
    truth: &Image,
    lambda: f64,
) -> Result<StepOutput> {
    let (splats, sel) = gather(scene, cam, scale, mode, settings);
    let (image, mut stats) = rasterize(&splats, cam, &settings.background)?;
    stats.num_splatted = sel.num_splatted;
    stats.num_selected = sel.num_selected;
    let (loss, d_image) = super::loss::loss_with_grad(&image, truth, lambda)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} for camera {} at scale {scale}", cam.id)));
    }
    let splat_grads = rasterize_backward(&splats, cam, &settings.background, &d_image)?;
    let per_splat: Vec<GaussianGrad> = splats
        .par_iter()
        .zip(&splat_grads)
        .map(|(s, g)| project_backward(&scene.gaussians[s.source_index as usize], cam, g))
        .collect();
    let mut grads = vec![None; scene.len()];
    for (s, g) in splats.iter().zip(per_splat) {
        grads[s.source_index as usize] = Some(g);
    }
    Ok(StepOutput {
        loss,
        image,
        stats,
        splats,
        splat_grads,
        grads,
    })
}

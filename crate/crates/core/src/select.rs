//! Coverage-range bookkeeping and the selective rendering filter.
//!
//! Every Gaussian remembers the range of pixel coverages it was observed at
//! while rendering at its own creation scale. A later render keeps it only
//! while its current coverage stays near that range.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{CoverageRange, Gaussian3D};
use crate::projection::{LowPassConfig, Projector, Splat2D};
use crate::scene::Scene;
use crate::stats::RenderStats;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectConfig {
    pub s_rel_max: f64,
    pub s_rel_min: f64,
    /// Coverage threshold in pixels below which a splat counts as small.
    pub s_t: f64,
    /// Decay applied to the stored maximum before comparing with a new observation.
    pub lambda1: f64,
    /// Growth applied to the stored minimum before comparing with a new observation.
    pub lambda2: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            s_rel_max: 1.5,
            s_rel_min: 0.5,
            s_t: 2.0,
            lambda1: 0.95,
            lambda2: 1.05,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.s_rel_max > 1.0
            && self.s_rel_min > 0.0
            && self.s_rel_min < 1.0
            && self.lambda1 > 0.0
            && self.lambda1 < 1.0
            && self.lambda2 > 1.0
            && self.s_t > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid selection parameters {self:?}")))
        }
    }
}

/// Scene-level facts the filter needs besides the Gaussian itself.
#[derive(Clone, Copy, Debug)]
pub struct SelectContext {
    pub render_scale: u32,
    pub l_max: u8,
    pub train_scale_min: u32,
    pub train_scale_max: u32,
}

impl SelectContext {
    pub fn new(scene: &Scene, render_scale: u32) -> Self {
        SelectContext {
            render_scale,
            l_max: scene.l_max,
            train_scale_min: scene.train_scale_min,
            train_scale_max: scene.train_scale_max,
        }
    }
}

/// Whether a Gaussian with the given level, stored range and current
/// coverage `s` takes part in the render.
pub fn keep(cfg: &SelectConfig, ctx: &SelectContext, level: u8, range: Option<CoverageRange>, s: f64) -> bool {
    let Some(r) = range else {
        return true;
    };
    let max_ok = s / r.max <= cfg.s_rel_max || (level == 1 && ctx.render_scale < ctx.train_scale_min);
    let min_ok = s / r.min >= cfg.s_rel_min
        || s >= cfg.s_t
        || (level == ctx.l_max && ctx.render_scale > ctx.train_scale_max);
    max_ok && min_ok
}

/// Observation update for one stored range.
pub fn update_range(cfg: &SelectConfig, range: Option<CoverageRange>, s: f64) -> CoverageRange {
    match range {
        None => CoverageRange { max: s, min: s },
        Some(r) => CoverageRange {
            max: (cfg.lambda1 * r.max).max(s),
            min: (cfg.lambda2 * r.min).min(s),
        },
    }
}

/// Projects every Gaussian for `cam` and keeps those `accept` approves
/// given their level, stored range and current coverage. Colors are
/// evaluated only for kept splats. `num_splatted` counts the Gaussians
/// `consider` admits that survive culling.
pub fn project_filtered(
    scene: &Scene,
    cam: &Camera,
    lp: &LowPassConfig,
    consider: impl Fn(&Gaussian3D) -> bool + Sync,
    accept: impl Fn(&Gaussian3D, f64) -> bool + Sync,
) -> (Vec<Splat2D>, RenderStats) {
    let proj = Projector::new(cam, lp);
    // order-preserving reduction: adjacent chunks are concatenated left to right
    let (num_splatted, splats) = scene
        .gaussians
        .par_iter()
        .enumerate()
        .fold(
            || (0usize, Vec::new()),
            |(mut n, mut out), (i, g)| {
                if consider(g) {
                    if let Some(geo) = proj.geometry(g) {
                        n += 1;
                        if accept(g, geo.coverage) {
                            out.push(Splat2D::from_geometry(geo, proj.color(g), i as u32));
                        }
                    }
                }
                (n, out)
            },
        )
        .reduce(
            || (0, Vec::new()),
            |(na, mut a), (nb, b)| {
                a.extend(b);
                (na + nb, a)
            },
        );
    let stats = RenderStats {
        num_splatted,
        num_selected: splats.len(),
        ..Default::default()
    };
    (splats, stats)
}

/// Projects every Gaussian for `cam` (already at `render_scale`) and keeps
/// the ones the coverage filter accepts.
pub fn select_for_render(
    scene: &Scene,
    cam: &Camera,
    render_scale: u32,
    cfg: &SelectConfig,
    lp: &LowPassConfig,
) -> (Vec<Splat2D>, RenderStats) {
    let ctx = SelectContext::new(scene, render_scale);
    project_filtered(scene, cam, lp, |_| true, |g, s| keep(cfg, &ctx, g.level, g.coverage, s))
}

/// Updates the stored ranges of the rendered splats whose source was
/// created at `render_scale`. Zero coverages carry no size information and
/// are ignored.
pub fn update_coverage_ranges(scene: &mut Scene, splats: &[Splat2D], render_scale: u32, cfg: &SelectConfig) {
    for s in splats {
        let g = &mut scene.gaussians[s.source_index as usize];
        if g.creation_scale != render_scale || !(s.coverage > 0.0) {
            continue;
        }
        let r = update_range(cfg, g.coverage, s.coverage);
        assert!(
            r.min > 0.0 && r.min <= r.max,
            "coverage range out of order for gaussian {}: [{}, {}]",
            s.source_index,
            r.min,
            r.max
        );
        g.coverage = Some(r);
    }
}

/// Renders (geometry only) every camera at every scale and records ranges,
/// so that every Gaussian seen at its creation scale has an initialized range.
pub fn warm_up_ranges(
    scene: &mut Scene,
    cameras: &[Camera],
    scales: &[u32],
    cfg: &SelectConfig,
    lp: &LowPassConfig,
) -> Result<()> {
    for &scale in scales {
        for cam in cameras {
            let c = cam.at_scale(scale)?;
            let (splats, _) = select_for_render(scene, &c, scale, cfg, lp);
            update_coverage_ranges(scene, &splats, scale, cfg);
        }
    }
    Ok(())
}

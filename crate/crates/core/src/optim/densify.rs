//! Cloning, splitting and pruning during fitting.

use nalgebra::{Vector2, Vector3};

use crate::gaussian::{logit, Gaussian3D};
use crate::projection::{Splat2D, SplatGrad};
use crate::scene::Scene;

/// Shrink factor applied to the scale of split children.
pub const SPLIT_SHRINK: f64 = 1.6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Average screen-space mean gradient (normalized-device units) above
    /// which a Gaussian is densified.
    pub grad_threshold: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// bound are split, smaller ones are cloned.
    pub percent_dense: f64,
    pub prune_opacity: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            prune_opacity: 0.005,
        }
    }
}

/// Running gradient statistics per Gaussian.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradAccum {
    pub screen: Vec<f64>,
    pub position: Vec<Vector3<f64>>,
    pub count: Vec<u32>,
}

impl GradAccum {
    pub fn new(n: usize) -> Self {
        GradAccum {
            screen: vec![0.0; n],
            position: vec![Vector3::zeros(); n],
            count: vec![0; n],
        }
    }

    /// Adds one view's splat gradients; image size converts pixel-space
    /// gradients to normalized-device units.
    pub fn add(&mut self, splats: &[Splat2D], grads: &[SplatGrad], pos_grads: &[Option<Vector3<f64>>], width: u32, height: u32) {
        for (s, g) in splats.iter().zip(grads) {
            let i = s.source_index as usize;
            let ndc = Vector2::new(g.mean2d.x * 0.5 * f64::from(width), g.mean2d.y * 0.5 * f64::from(height));
            self.screen[i] += ndc.norm();
            self.count[i] += 1;
            if let Some(p) = pos_grads[i] {
                self.position[i] += p;
            }
        }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.screen[i] / f64::from(self.count[i])
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    /// For each Gaussian after the pass, its index before, or `None` if new.
    pub origin: Vec<Option<usize>>,
}

fn clone_of(g: &Gaussian3D, descent: &Vector3<f64>) -> Gaussian3D {
    let mut c = g.clone();
    let n = descent.norm();
    if n > 0.0 {
        let d = descent / n;
        let std = (d.transpose() * g.covariance() * d)[(0, 0)].sqrt();
        c.position += d * std;
    }
    c
}

fn split_children(g: &Gaussian3D) -> [Gaussian3D; 2] {
    let s = g.scale();
    let axis = s.imax();
    let dir = g.rotation_matrix().column(axis).into_owned();
    let offset = dir * s[axis];
    let mut a = g.clone();
    a.log_scale = g.log_scale.add_scalar(-SPLIT_SHRINK.ln());
    if let Some(r) = a.coverage.as_mut() {
        r.max /= SPLIT_SHRINK;
        r.min /= SPLIT_SHRINK;
    }
    let mut b = a.clone();
    a.position += offset;
    b.position -= offset;
    [a, b]
}

/// Clones small and splits large high-gradient Gaussians, then removes
/// nearly transparent ones. New Gaussians keep their parent's level,
/// creation scale and coverage range.
pub fn densify_and_prune(scene: &mut Scene, accum: &GradAccum, cfg: &DensifyConfig) -> DensifyReport {
    let mut report = DensifyReport::default();
    let dense_limit = cfg.percent_dense * scene.bound_b;
    let mut out: Vec<Gaussian3D> = Vec::with_capacity(scene.len());
    let mut origin = Vec::with_capacity(scene.len());
    let mut extra: Vec<Gaussian3D> = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        let hot = accum.average(i) >= cfg.grad_threshold && accum.count[i] > 0;
        if hot && g.scale().max() <= dense_limit {
            report.cloned += 1;
            out.push(g.clone());
            origin.push(Some(i));
            extra.push(clone_of(g, &-accum.position[i]));
        } else if hot {
            report.split += 1;
            extra.extend(split_children(g));
        } else {
            out.push(g.clone());
            origin.push(Some(i));
        }
    }
    origin.extend(std::iter::repeat_n(None, extra.len()));
    out.extend(extra);

    let threshold = logit(cfg.prune_opacity);
    let mut kept = Vec::with_capacity(out.len());
    let mut kept_origin = Vec::with_capacity(out.len());
    for (g, o) in out.into_iter().zip(origin) {
        if g.opacity_logit < threshold {
            report.pruned += 1;
        } else {
            kept.push(g);
            kept_origin.push(o);
        }
    }
    scene.gaussians = kept;
    report.origin = kept_origin;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Quaternion;

    fn g(pos: f64, scale: f64, opacity: f64, level: u8) -> Gaussian3D {
        let mut g = Gaussian3D::new(
            Vector3::new(pos, 0.0, -2.0),
            Quaternion::identity(),
            Vector3::new(scale, scale * 0.5, scale * 0.5),
            opacity,
            vec![Vector3::zeros()],
        );
        g.set_level(level);
        g
    }

    #[test]
    fn zero_gradients_only_prune() {
        let mut scene = Scene::new(vec![g(0.0, 0.1, 0.5, 1), g(1.0, 0.1, 0.001, 1), g(2.0, 0.1, 0.9, 2)], 0);
        let r = densify_and_prune(&mut scene, &GradAccum::new(3), &DensifyConfig::default());
        assert_eq!((r.cloned, r.split, r.pruned), (0, 0, 1));
        assert_eq!(scene.len(), 2);
        assert_eq!(r.origin, vec![Some(0), Some(2)]);
    }

    #[test]
    fn split_children_inherit_level() {
        let mut scene = Scene::new(vec![g(0.0, 0.5, 0.5, 3)], 0);
        let mut acc = GradAccum::new(1);
        acc.screen[0] = 1.0;
        acc.count[0] = 1;
        let r = densify_and_prune(&mut scene, &acc, &DensifyConfig::default());
        assert_eq!(r.split, 1);
        assert_eq!(scene.len(), 2);
        for c in &scene.gaussians {
            assert_eq!((c.level, c.creation_scale), (3, 16));
            assert!((c.scale().x - 0.5 / 1.6).abs() < 1e-12);
        }
        assert!((scene.gaussians[0].position.x - 0.5).abs() < 1e-12);
        assert!((scene.gaussians[1].position.x + 0.5).abs() < 1e-12);
    }

    #[test]
    fn clone_moves_one_stddev_downhill() {
        let mut scene = Scene::new(vec![g(0.0, 0.005, 0.5, 2)], 0);
        let mut acc = GradAccum::new(1);
        acc.screen[0] = 1.0;
        acc.count[0] = 1;
        acc.position[0] = Vector3::new(-3.0, 0.0, 0.0);
        let r = densify_and_prune(&mut scene, &acc, &DensifyConfig::default());
        assert_eq!((r.cloned, r.origin.clone()), (1, vec![Some(0), None]));
        assert_eq!(scene.gaussians[1].level, 2);
        assert!((scene.gaussians[1].position.x - 0.005).abs() < 1e-12);
    }
}

//! Construction of coarse levels of detail.
//!
//! Gaussians that are too small to be resolved at a coarser resolution are
//! binned on a voxel grid and each nonempty voxel is replaced, at the coarse
//! level, by one averaged Gaussian enlarged to the coverage threshold.

use std::collections::BTreeMap;

use nalgebra::{Quaternion, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{level_scale, logit, Gaussian3D};
use crate::projection::{LowPassConfig, Projector};
use crate::scene::Scene;

/// Voxel-grid cell of a normalized position at a given level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub level: u8,
    pub ijk: [u32; 3],
}

/// Grid resolution per axis for a level.
pub fn voxel_resolution(level: u8) -> u32 {
    400 / u32::from(level)
}

/// Maps world coordinates into `(-2, 2)`: linear inside `[-B, B]`, then
/// `sign(x) (2 - B/|x|)` per component outside.
pub fn normalize_position(x: &Vector3<f64>, b: f64) -> Vector3<f64> {
    x.map(|v| {
        if v.abs() <= b {
            v / b
        } else {
            v.signum() * (2.0 - b / v.abs())
        }
    })
}

/// Inverse of [`normalize_position`] for components in `(-2, 2)`.
pub fn denormalize_position(u: &Vector3<f64>, b: f64) -> Vector3<f64> {
    u.map(|v| {
        if v.abs() <= 1.0 {
            v * b
        } else {
            v.signum() * b / (2.0 - v.abs())
        }
    })
}

impl VoxelKey {
    pub fn of(normalized: &Vector3<f64>, level: u8) -> Self {
        let r = voxel_resolution(level);
        let cell = |v: f64| (((v + 2.0) / 4.0 * f64::from(r)).floor().max(0.0) as u32).min(r - 1);
        VoxelKey {
            level,
            ijk: [cell(normalized.x), cell(normalized.y), cell(normalized.z)],
        }
    }

    /// World-space box covered by this cell, as per-axis `(lo, hi)`.
    pub fn world_bounds(&self, b: f64) -> [(f64, f64); 3] {
        let r = f64::from(voxel_resolution(self.level));
        let edge = |i: u32| {
            let u = f64::from(i) / r * 4.0 - 2.0;
            if u <= -2.0 {
                f64::NEG_INFINITY
            } else if u >= 2.0 {
                f64::INFINITY
            } else {
                denormalize_position(&Vector3::repeat(u), b).x
            }
        };
        self.ijk.map(|i| (edge(i), edge(i + 1)))
    }
}

/// Minimum pixel coverage over `cameras` at downsample `scale` for every
/// Gaussian whose level lies in `levels`; `None` outside the range and
/// infinity for Gaussians no camera sees.
pub fn min_coverage(
    scene: &Scene,
    cameras: &[Camera],
    levels: std::ops::RangeInclusive<u8>,
    scale: u32,
    lp: &LowPassConfig,
) -> Result<Vec<Option<f64>>> {
    if cameras.is_empty() {
        return Err(Error::invalid("cameras", "at least one camera is required"));
    }
    let scaled: Vec<Camera> = cameras.iter().map(|c| c.at_scale(scale)).collect::<Result<_>>()?;
    let per_camera: Vec<Vec<f64>> = scaled
        .par_iter()
        .map(|cam| {
            let proj = Projector::new(cam, lp);
            scene
                .gaussians
                .iter()
                .map(|g| {
                    if !levels.contains(&g.level) {
                        return f64::INFINITY;
                    }
                    proj.geometry(g).map_or(f64::INFINITY, |geo| geo.coverage)
                })
                .collect()
        })
        .collect();
    Ok(scene
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| {
            levels
                .contains(&g.level)
                .then(|| per_camera.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min))
        })
        .collect())
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut s = Sum::default();
    let mut n = 0usize;
    for v in values {
        s.add(v);
        n += 1;
    }
    s.value() / n as f64
}

fn mean_vec(values: &[&Vector3<f64>]) -> Vector3<f64> {
    Vector3::from_fn(|k, _| mean(values.iter().map(|v| v[k])))
}

/// Canonical content ordering, so pooling does not depend on scene order.
fn content_order(a: &Gaussian3D, b: &Gaussian3D) -> std::cmp::Ordering {
    let key = |g: &Gaussian3D| {
        [
            g.position.x,
            g.position.y,
            g.position.z,
            g.opacity_logit,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            g.rotation.w,
            g.rotation.i,
            g.rotation.j,
            g.rotation.k,
        ]
    };
    let (ka, kb) = (key(a), key(b));
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Average-pools one voxel's members (each with its minimum coverage) into
/// a single Gaussian enlarged so its coverage lands near `s_t`.
pub fn pool(members: &[(&Gaussian3D, f64)], level: u8, s_t: f64) -> Gaussian3D {
    let mut sorted: Vec<(&Gaussian3D, f64)> = members.to_vec();
    sorted.sort_by(|a, b| content_order(a.0, b.0).then(a.1.total_cmp(&b.1)));
    let gs: Vec<&Gaussian3D> = sorted.iter().map(|m| m.0).collect();

    let position = mean_vec(&gs.iter().map(|g| &g.position).collect::<Vec<_>>());
    let log_scale = mean_vec(&gs.iter().map(|g| &g.log_scale).collect::<Vec<_>>());
    let reference = gs[0].rotation.normalize();
    let quats: Vec<[f64; 4]> = gs
        .iter()
        .map(|g| {
            let q = g.rotation.normalize();
            let q = if q.dot(&reference) < 0.0 { -q } else { q };
            [q.w, q.i, q.j, q.k]
        })
        .collect();
    let qm: Vec<f64> = (0..4).map(|k| mean(quats.iter().map(|q| q[k]))).collect();
    let mut rotation = Quaternion::new(qm[0], qm[1], qm[2], qm[3]);
    if rotation.norm() < 1e-12 {
        rotation = reference;
    }
    let rotation = rotation.normalize();
    let rotation = if rotation.w < 0.0 { -rotation } else { rotation };
    let sh_len = gs[0].sh.len();
    let sh = (0..sh_len)
        .map(|k| mean_vec(&gs.iter().map(|g| &g.sh[k]).collect::<Vec<_>>()))
        .collect();
    let opacity = mean(gs.iter().map(|g| g.opacity()));
    let s_avg = mean(sorted.iter().map(|m| m.1));

    Gaussian3D {
        position,
        rotation,
        log_scale: log_scale.add_scalar((s_t / s_avg).ln()),
        opacity_logit: logit(opacity),
        sh,
        level,
        creation_scale: level_scale(level),
        coverage: None,
    }
}

/// Emits the level-`level` Gaussians aggregating every finer Gaussian whose
/// minimum coverage at the level's scale is positive but below `s_t`.
/// Output is in voxel-key order.
pub fn aggregate_level(
    scene: &Scene,
    cameras: &[Camera],
    level: u8,
    s_t: f64,
    lp: &LowPassConfig,
) -> Result<Vec<Gaussian3D>> {
    if level < 2 || level > scene.l_max {
        return Err(Error::invalid("level", format!("{level} outside 2..={}", scene.l_max)));
    }
    let cov = min_coverage(scene, cameras, 1..=level - 1, level_scale(level), lp)?;
    let mut voxels: BTreeMap<VoxelKey, Vec<(&Gaussian3D, f64)>> = BTreeMap::new();
    for (g, s) in scene.gaussians.iter().zip(&cov) {
        // zero coverage means the splat never reaches the opacity threshold
        let Some(s) = *s else { continue };
        if s > 0.0 && s < s_t {
            let key = VoxelKey::of(&normalize_position(&g.position, scene.bound_b), level);
            voxels.entry(key).or_default().push((g, s));
        }
    }
    Ok(voxels.values().map(|m| pool(m, level, s_t)).collect())
}

/// Inserts aggregated levels `2..=l_max` in ascending order, each seeing all
/// finer levels including those just inserted. Returns the number inserted
/// per level, starting at level 2.
pub fn build_multiscale(scene: &mut Scene, cameras: &[Camera], s_t: f64, lp: &LowPassConfig) -> Result<Vec<usize>> {
    let mut inserted = Vec::new();
    for level in 2..=scene.l_max {
        let fresh = aggregate_level(scene, cameras, level, s_t, lp)?;
        inserted.push(fresh.len());
        scene.gaussians.extend(fresh);
    }
    Ok(inserted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        let b = 10.0;
        assert_eq!(normalize_position(&Vector3::new(5.0, -5.0, 0.0), b), Vector3::new(0.5, -0.5, 0.0));
        assert_eq!(normalize_position(&Vector3::new(20.0, 0.0, 0.0), b), Vector3::new(1.5, 0.0, 0.0));
        assert_eq!(normalize_position(&Vector3::new(10.0, -10.0, 0.0), b), Vector3::new(1.0, -1.0, 0.0));
        let far = normalize_position(&Vector3::new(1e12, -1e12, 0.0), b);
        assert!((far.x - 2.0).abs() < 1e-9 && (far.y + 2.0).abs() < 1e-9);
    }

    #[test]
    fn resolutions() {
        assert_eq!(voxel_resolution(2), 200);
        assert_eq!(voxel_resolution(3), 133);
        assert_eq!(voxel_resolution(4), 100);
    }

    #[test]
    fn denormalize_inverts() {
        let b = 3.0;
        for x in [-100.0, -3.5, -3.0, -1.0, 0.0, 0.7, 2.9, 3.0, 4.0, 55.0] {
            let v = Vector3::new(x, -x, 0.5 * x);
            let back = denormalize_position(&normalize_position(&v, b), b);
            assert!((back - v).abs().max() <= 1e-12 * v.abs().max().max(1.0));
        }
    }

    #[test]
    fn voxel_keys_stay_in_range() {
        for v in [-2.0, -1.999, 0.0, 1.9999999, 2.0] {
            let k = VoxelKey::of(&Vector3::repeat(v), 3);
            assert!(k.ijk.iter().all(|&i| i < 133));
        }
    }
}

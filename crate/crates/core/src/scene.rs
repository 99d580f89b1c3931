use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{level_scale, sh_len_for_degree, Gaussian3D};

pub const DEFAULT_L_MAX: u8 = 4;

/// A multi-scale Gaussian set plus the metadata needed to aggregate and
/// select it.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
    pub l_max: u8,
    /// Half-length of the normalization cube, world units.
    pub bound_b: f64,
    pub sh_degree: usize,
    pub train_scale_min: u32,
    pub train_scale_max: u32,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>, sh_degree: usize) -> Self {
        Scene {
            gaussians,
            l_max: DEFAULT_L_MAX,
            bound_b: 1.0,
            sh_degree,
            train_scale_min: 1,
            train_scale_max: level_scale(DEFAULT_L_MAX),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Number of Gaussians per level, index 0 is level 1.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; usize::from(self.l_max)];
        for g in &self.gaussians {
            if let Some(c) = counts.get_mut(usize::from(g.level).wrapping_sub(1)) {
                *c += 1;
            }
        }
        counts
    }

    /// Keeps only Gaussians of the given level.
    pub fn only_level(&self, level: u8) -> Scene {
        Scene {
            gaussians: self
                .gaussians
                .iter()
                .filter(|g| g.level == level)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound_b > 0.0 && self.bound_b.is_finite()) {
            return Err(Error::invalid("scene", format!("bound_B = {}", self.bound_b)));
        }
        if self.l_max == 0 {
            return Err(Error::invalid("scene", "l_max must be at least 1"));
        }
        let sh_len = sh_len_for_degree(self.sh_degree);
        for (i, g) in self.gaussians.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gaussian {i}")));
            }
            if g.level == 0 || g.level > self.l_max {
                return Err(Error::invalid(
                    "scene",
                    format!("gaussian {i} has level {} outside [1, {}]", g.level, self.l_max),
                ));
            }
            if g.creation_scale != level_scale(g.level) {
                return Err(Error::invalid(
                    "scene",
                    format!(
                        "gaussian {i} has creation scale {} but level {}",
                        g.creation_scale, g.level
                    ),
                ));
            }
            if g.sh.len() != sh_len {
                return Err(Error::invalid(
                    "scene",
                    format!("gaussian {i} has {} SH coefficients, expected {sh_len}", g.sh.len()),
                ));
            }
            if let Some(r) = g.coverage {
                if !(r.min > 0.0 && r.min <= r.max) {
                    return Err(Error::invalid(
                        "scene",
                        format!("gaussian {i} coverage range [{}, {}]", r.min, r.max),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Half-side of the smallest origin-centered cube containing every camera
/// center, clamped below at 1.
pub fn bound_from_cameras(cameras: &[Camera]) -> f64 {
    cameras
        .iter()
        .map(|c| c.center().abs().max())
        .fold(1.0, f64::max)
}

//! The multi-scale fitting loop.
//!
//! Iterations before `warmup_iters` train the finest scale only. At
//! `warmup_iters` the coarse levels are built once and every Gaussian's
//! coverage range is initialized by rendering each camera at each training
//! scale; after that every iteration samples a camera and a scale uniformly.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{Adam, LearningRates};
use super::backward::forward_backward;
use super::densify::{densify_and_prune, DensifyConfig, GradAccum};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::lod::build_multiscale;
use crate::render::{RenderMode, RenderSettings};
use crate::scene::{bound_from_cameras, Scene};
use crate::select::{update_coverage_ranges, warm_up_ranges};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub warmup_iters: usize,
    pub lr: LearningRates,
    pub loss_lambda: f64,
    pub densify_interval: usize,
    pub densify_from: usize,
    pub densify_until: usize,
    pub densify: DensifyConfig,
    pub scales: Vec<u32>,
    pub seed: u64,
    /// Whether to insert coarse levels at the end of warm-up.
    pub build_lod: bool,
    pub render: RenderSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 3000,
            warmup_iters: 1000,
            lr: LearningRates::default(),
            loss_lambda: 0.2,
            densify_interval: 100,
            densify_from: 500,
            densify_until: 1500,
            densify: DensifyConfig::default(),
            scales: vec![1, 4, 16, 64],
            seed: 0,
            build_lod: true,
            render: RenderSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.build_lod && self.warmup_iters >= self.iterations {
            return Err(Error::Config(format!(
                "warmup_iters ({}) must be below iterations ({})",
                self.warmup_iters, self.iterations
            )));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config(format!("bad training scales {:?}", self.scales)));
        }
        if self.densify_interval == 0 {
            return Err(Error::Config("densify_interval must be positive".into()));
        }
        self.render.select.validate()
    }
}

/// Training views: full-resolution cameras and the ground truth at every
/// training scale.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: BTreeMap<u32, Vec<Image>>,
}

impl Dataset {
    /// Area-averages full-resolution images down to every scale.
    pub fn from_full_res(cameras: Vec<Camera>, images: Vec<Image>, scales: &[u32]) -> Result<Dataset> {
        if cameras.len() != images.len() || cameras.is_empty() {
            return Err(Error::invalid(
                "dataset",
                format!("{} cameras for {} images", cameras.len(), images.len()),
            ));
        }
        for (c, im) in cameras.iter().zip(&images) {
            if (c.width, c.height) != (im.width, im.height) {
                return Err(Error::Dimensions(format!(
                    "camera {} is {}x{} but its image is {}x{}",
                    c.id, c.width, c.height, im.width, im.height
                )));
            }
        }
        let mut out = BTreeMap::new();
        for &s in scales {
            out.insert(s, images.iter().map(|im| im.downsample(s)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Dataset { cameras, images: out })
    }

    pub fn truth(&self, camera: usize, scale: u32) -> Result<&Image> {
        self.images
            .get(&scale)
            .and_then(|v| v.get(camera))
            .ok_or_else(|| Error::invalid("dataset", format!("no image for camera {camera} at scale {scale}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub camera: usize,
    pub scale: u32,
    pub loss: f64,
    pub gaussian_count: usize,
    pub inserted_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainSummary {
    /// Gaussians inserted per level, starting at level 2.
    pub inserted_per_level: Vec<usize>,
    pub inserted_total: usize,
    pub final_count: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    /// Mean loss over the last 100 iterations.
    pub final_loss: f64,
}

/// Fits `scene` to `data`, calling `log` once per iteration.
pub fn train(
    scene: &mut Scene,
    data: &Dataset,
    cfg: &TrainConfig,
    mut log: impl FnMut(&TrainRecord),
) -> Result<TrainSummary> {
    cfg.validate()?;
    for s in &cfg.scales {
        data.truth(0, *s)?;
    }
    scene.bound_b = bound_from_cameras(&data.cameras);
    scene.train_scale_min = *cfg.scales.iter().min().expect("validated nonempty");
    scene.train_scale_max = *cfg.scales.iter().max().expect("validated nonempty");
    let sh_len = scene.gaussians.first().map_or(1, |g| g.sh.len());
    let mut adam = Adam::new(scene.len(), sh_len);
    let mut accum = GradAccum::new(scene.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut summary = TrainSummary::default();
    let mut recent: Vec<f64> = Vec::new();
    let settings = &cfg.render;
    let finest = scene.train_scale_min;

    for it in 0..cfg.iterations {
        if cfg.build_lod && it == cfg.warmup_iters {
            let before = scene.len();
            summary.inserted_per_level =
                build_multiscale(scene, &data.cameras, settings.select.s_t, &settings.lowpass)?;
            summary.inserted_total = scene.len() - before;
            let origin: Vec<Option<usize>> = (0..scene.len()).map(|i| (i < before).then_some(i)).collect();
            adam.remap(&origin, sh_len);
            accum = GradAccum::new(scene.len());
            warm_up_ranges(scene, &data.cameras, &cfg.scales, &settings.select, &settings.lowpass)?;
        }
        let camera = rng.random_range(0..data.cameras.len());
        let scale = if it < cfg.warmup_iters {
            finest
        } else {
            cfg.scales[rng.random_range(0..cfg.scales.len())]
        };
        let cam = data.cameras[camera].at_scale(scale)?;
        let truth = data.truth(camera, scale)?;
        let step = forward_backward(scene, &cam, scale, RenderMode::MultiScale, settings, truth, cfg.loss_lambda)
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("iteration {it}: {m}")),
                other => other,
            })?;
        update_coverage_ranges(scene, &step.splats, scale, &settings.select);

        let pos: Vec<Option<Vector3<f64>>> = step.grads.iter().map(|g| g.as_ref().map(|g| g.position)).collect();
        accum.add(&step.splats, &step.splat_grads, &pos, cam.width, cam.height);
        let position_lr = cfg.lr.position_at(it, cfg.iterations, scene.bound_b);
        adam.step(&mut scene.gaussians, &step.grads, &cfg.lr, position_lr);

        if (it + 1) % cfg.densify_interval == 0 && it + 1 >= cfg.densify_from && it < cfg.densify_until {
            let r = densify_and_prune(scene, &accum, &cfg.densify);
            summary.cloned += r.cloned;
            summary.split += r.split;
            summary.pruned += r.pruned;
            adam.remap(&r.origin, sh_len);
            accum = GradAccum::new(scene.len());
        }

        recent.push(step.loss);
        if recent.len() > 100 {
            recent.remove(0);
        }
        log(&TrainRecord {
            iteration: it,
            camera,
            scale,
            loss: step.loss,
            gaussian_count: scene.len(),
            inserted_count: summary.inserted_total,
        });
    }
    summary.final_count = scene.len();
    summary.final_loss = if recent.is_empty() {
        0.0
    } else {
        recent.iter().sum::<f64>() / recent.len() as f64
    };
    Ok(summary)
}

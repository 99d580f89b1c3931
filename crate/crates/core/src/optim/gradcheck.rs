//! Central finite-difference check of the full gradient chain, from the
//! photometric loss back to every raw Gaussian parameter.

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{flatten_grad, read_params, write_params};
use super::backward::forward_backward;
use super::loss::loss;
use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::Gaussian3D;
use crate::image::Image;
use crate::render::{render, RenderMode, RenderSettings};
use crate::scene::Scene;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub gaussian: usize,
    pub group: &'static str,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
}

fn group_of(k: usize) -> (&'static str, usize) {
    match k {
        0..3 => ("position", k),
        3..7 => ("rotation", k - 3),
        7..10 => ("log_scale", k - 7),
        10 => ("opacity", 0),
        _ => ("sh", k - 11),
    }
}

/// A small random scene of overlapping, partly transparent Gaussians in
/// front of an 8x8 camera, with a random target image.
pub fn grad_check_problem(seed: u64, count: usize, sh_degree: usize) -> Result<(Scene, Camera, Image)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = Camera::look_at(
        0,
        8,
        8,
        9.0,
        Vector3::new(0.05, -0.03, 0.0),
        Vector3::new(0.0, 0.0, -3.0),
        Vector3::y(),
    )?;
    let sh_len = (sh_degree + 1) * (sh_degree + 1);
    let gaussians = (0..count)
        .map(|_| {
            let q = Quaternion::new(
                rng.random_range(0.5..1.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let mut sh = vec![Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )];
            sh.extend((1..sh_len).map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1))));
            Gaussian3D::new(
                Vector3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-3.5..-2.5),
                ),
                q,
                Vector3::from_fn(|_, _| rng.random_range(0.15..0.45)),
                rng.random_range(0.3..0.8),
                sh,
            )
        })
        .collect();
    let truth = Image::from_fn(8, 8, |_, _| Vector3::from_fn(|_, _| rng.random_range(0.0..1.0)));
    Ok((Scene::new(gaussians, sh_degree), cam, truth))
}

/// Compares analytic gradients with central differences of step `h` for
/// every parameter of every Gaussian. Relative error is measured against
/// `max(|analytic|, |numeric|, floor)`.
pub fn grad_check(
    scene: &Scene,
    cam: &Camera,
    truth: &Image,
    settings: &RenderSettings,
    lambda: f64,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let out = forward_backward(scene, cam, 1, RenderMode::SingleScale, settings, truth, lambda)?;
    let eval = |s: &Scene| -> Result<f64> {
        let r = render(s, cam, 1, RenderMode::SingleScale, settings)?;
        loss(&r.image, truth, lambda)
    };
    let mut report = GradCheckReport::default();
    for (i, g) in scene.gaussians.iter().enumerate() {
        let analytic = out.grads[i].as_ref().map(flatten_grad);
        let base = read_params(g);
        for k in 0..base.len() {
            let probe = |delta: f64| -> Result<f64> {
                let mut s = scene.clone();
                let mut p = base.clone();
                p[k] += delta;
                // raw parameters, no renormalization: the chain differentiates through it
                write_params(&mut s.gaussians[i], &p);
                eval(&s)
            };
            let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
            let a = analytic.as_ref().map_or(0.0, |v| v[k]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            let (group, component) = group_of(k);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.entries.push(GradCheckEntry {
                gaussian: i,
                group,
                component,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}

//! Deterministic synthetic scenes with ground-truth renders.

use std::f64::consts::{PI, TAU};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::image::Image;
use crate::render::{render, RenderMode, RenderSettings};
use crate::scene::{bound_from_cameras, Scene};
use crate::sh::C0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// A wall of tiny two-tone Gaussians, one per checker cell.
    CheckerWall,
    /// Random Gaussians in a box in front of the cameras.
    RandomCloud,
    /// A smooth near wall beside a far wall of sub-pixel random-color Gaussians.
    NearFar,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checker_wall" => Ok(SynthKind::CheckerWall),
            "random_cloud" => Ok(SynthKind::RandomCloud),
            "near_far" => Ok(SynthKind::NearFar),
            other => Err(Error::invalid(
                "scene kind",
                format!("{other:?} (expected checker_wall, random_cloud or near_far)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    /// Checker cells per side.
    pub cells: u32,
    /// Gaussians in the random cloud.
    pub count: usize,
    pub cameras: usize,
    pub sh_degree: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            cells: 64,
            count: 500,
            cameras: 4,
            sh_degree: 1,
            seed: 0,
        }
    }
}

pub struct SynthScene {
    pub scene: Scene,
    pub cameras: Vec<Camera>,
    /// Full-resolution render of `scene` from each camera.
    pub truth: Vec<Image>,
}

fn sh_for(color: Vector3<f64>, degree: usize) -> Vec<Vector3<f64>> {
    let mut sh = vec![Vector3::zeros(); (degree + 1) * (degree + 1)];
    sh[0] = (color - Vector3::repeat(0.5)) / C0;
    sh
}

/// Cameras on a small circle around `center`, all looking down -z.
fn ring(n: usize, radius: f64, w: u32, h: u32, focal: f64) -> Result<Vec<Camera>> {
    (0..n.max(1))
        .map(|i| {
            let a = TAU * i as f64 / n.max(1) as f64;
            let eye = if n <= 1 {
                Vector3::zeros()
            } else {
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            };
            Camera::look_at(i as u32, w, h, focal, eye, eye - Vector3::z(), Vector3::y())
        })
        .collect()
}

fn iso(position: Vector3<f64>, std: f64, opacity: f64, color: Vector3<f64>, degree: usize) -> Gaussian3D {
    Gaussian3D::new(position, Quaternion::identity(), Vector3::repeat(std), opacity, sh_for(color, degree))
}

fn checker_wall(p: &SynthParams) -> Result<(Vec<Gaussian3D>, Vec<Camera>)> {
    // two pixels per cell at full resolution
    let size = 2 * p.cells;
    let focal = f64::from(size);
    let cams = ring(p.cameras, 0.02, size, size, focal)?;
    let pitch = 2.0 / focal;
    let light = Vector3::new(0.9, 0.9, 0.2);
    let dark = Vector3::new(0.1, 0.2, 0.8);
    let mut gs = Vec::with_capacity((p.cells * p.cells) as usize);
    for j in 0..p.cells {
        for i in 0..p.cells {
            let x = (f64::from(i) + 0.5) * pitch - 0.5;
            let y = 0.5 - (f64::from(j) + 0.5) * pitch;
            let color = if (i + j) % 2 == 0 { light } else { dark };
            gs.push(iso(Vector3::new(x, y, -1.0), 1.0 / focal, 0.95, color, p.sh_degree));
        }
    }
    Ok((gs, cams))
}

fn random_cloud(p: &SynthParams) -> Result<(Vec<Gaussian3D>, Vec<Camera>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let cams = (0..p.cameras.max(1))
        .map(|i| {
            let a = TAU * i as f64 / p.cameras.max(1) as f64;
            let eye = Vector3::new(0.3 * a.cos(), 0.3 * a.sin(), 0.0);
            Camera::look_at(i as u32, 64, 64, 64.0, eye, Vector3::new(0.0, 0.0, -3.0), Vector3::y())
        })
        .collect::<Result<Vec<_>>>()?;
    let log_scale = Normal::new((0.04f64).ln(), 0.4).expect("valid normal");
    let gs = (0..p.count)
        .map(|_| {
            let position = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-3.5..-2.5),
            );
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let rot = UnitQuaternion::from_scaled_axis(axis * PI);
            let scale = Vector3::from_fn(|_, _| log_scale.sample(&mut rng).exp());
            let color = Vector3::from_fn(|_, _| rng.random_range(0.05..0.95));
            let mut sh = sh_for(color, p.sh_degree);
            for c in sh.iter_mut().skip(1) {
                *c = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            }
            Gaussian3D::new(position, rot.into_inner(), scale, rng.random_range(0.3..0.95), sh)
        })
        .collect();
    Ok((gs, cams))
}

pub const NEAR_FAR_WIDTH: u32 = 256;
pub const NEAR_FAR_HEIGHT: u32 = 128;
pub const NEAR_DEPTH: f64 = 0.4;
pub const FAR_DEPTH: f64 = 1.01;

fn near_far(p: &SynthParams) -> Result<(Vec<Gaussian3D>, Vec<Camera>)> {
    let (w, h) = (NEAR_FAR_WIDTH, NEAR_FAR_HEIGHT);
    let focal = f64::from(w);
    let cams = ring(p.cameras, 0.01, w, h, focal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // world position of pixel (u, v) on the plane at `depth` for the centered camera
    let at = |u: f64, v: f64, depth: f64| {
        Vector3::new((u - f64::from(w) / 2.0) / focal * depth, -(v - f64::from(h) / 2.0) / focal * depth, -depth)
    };
    let mut gs = Vec::new();

    // far wall: one Gaussian per pixel, 0.25 px standard deviation, random colors
    let px_far = FAR_DEPTH / focal;
    for v in -8..h as i32 + 8 {
        for u in 120..w as i32 + 8 {
            let mut pos = at(f64::from(u) + 0.5, f64::from(v) + 0.5, FAR_DEPTH);
            pos.z += rng.random_range(-1e-4..1e-4);
            let color = Vector3::from_fn(|_, _| rng.random_range(0.05..0.95));
            gs.push(iso(pos, 0.25 * px_far, 0.9, color, p.sh_degree));
        }
    }

    // near wall: 4 px pitch, 2 px standard deviation, smooth colors
    let px_near = NEAR_DEPTH / focal;
    for v in (-16..h as i32 + 16).step_by(4) {
        for u in (-16..136).step_by(4) {
            let (fu, fv) = (f64::from(u) + 0.5, f64::from(v) + 0.5);
            let color = Vector3::new(
                0.5 + 0.35 * (fu / 40.0).sin(),
                0.5 + 0.35 * (fv / 30.0).cos(),
                0.4 + 0.3 * ((fu + fv) / 50.0).sin(),
            );
            gs.push(iso(at(fu, fv, NEAR_DEPTH), 2.0 * px_near, 0.95, color, p.sh_degree));
        }
    }
    Ok((gs, cams))
}

/// Builds a scene, its cameras and full-resolution ground truth.
pub fn synth_scene(kind: SynthKind, params: &SynthParams, settings: &RenderSettings) -> Result<SynthScene> {
    if params.sh_degree > 3 {
        return Err(Error::invalid("sh_degree", format!("{} exceeds 3", params.sh_degree)));
    }
    let (gs, cameras) = match kind {
        SynthKind::CheckerWall => checker_wall(params)?,
        SynthKind::RandomCloud => random_cloud(params)?,
        SynthKind::NearFar => near_far(params)?,
    };
    let mut scene = Scene::new(gs, params.sh_degree);
    scene.bound_b = bound_from_cameras(&cameras);
    let truth = cameras
        .iter()
        .map(|c| render(&scene, c, 1, RenderMode::SingleScale, settings).map(|r| r.image))
        .collect::<Result<_>>()?;
    Ok(SynthScene { scene, cameras, truth })
}

/// A deterministic perturbation of a scene's appearance and size, used as
/// a fitting starting point.
pub fn perturb(scene: &Scene, seed: u64, amount: f64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    let mut out = scene.clone();
    for g in &mut out.gaussians {
        g.sh[0] += Vector3::from_fn(|_, _| 0.1 * amount * n.sample(&mut rng)) / C0;
        g.opacity_logit += 0.3 * amount * n.sample(&mut rng);
        g.log_scale += Vector3::from_fn(|_, _| 0.1 * amount * n.sample(&mut rng));
    }
    out
}

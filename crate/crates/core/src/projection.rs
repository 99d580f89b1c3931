//! EWA perspective splatting of 3D Gaussians to screen space.
//!
//! A Gaussian with world covariance `V` projects to the screen covariance
//! `J W V W^T J^T`, where `W` is the world-to-view rotation and `J` the
//! perspective Jacobian at the view-space mean. Rendering convolves every
//! splat with an isotropic low-pass kernel, which for Gaussians amounts to
//! adding `dilation * I` to the screen covariance.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::gaussian::{covariance_vjp, Gaussian3D, GaussianGrad};
use crate::scene::Scene;
use crate::sh;

pub const NEAR_PLANE: f64 = 0.01;
/// Opacity level that bounds a splat's visible footprint.
pub const OPACITY_THRESHOLD: f64 = 1.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowPassConfig {
    /// Variance (pixels^2) added to each diagonal entry of the screen covariance.
    pub dilation: f64,
    /// Measure pixel coverage on the dilated covariance instead of the raw
    /// projected one. With the default dilation no opaque splat can then
    /// measure below about 3.6 px, so this is off by default.
    pub coverage_on_dilated: bool,
}

impl Default for LowPassConfig {
    fn default() -> Self {
        LowPassConfig {
            dilation: 0.3,
            coverage_on_dilated: false,
        }
    }
}

impl LowPassConfig {
    pub fn with_dilation(dilation: f64) -> Self {
        LowPassConfig {
            dilation,
            ..Default::default()
        }
    }
}

/// A projected Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub cov2d_lp: Matrix2<f64>,
    pub depth: f64,
    pub color: Vector3<f64>,
    pub opacity: f64,
    /// Pixel coverage in pixels.
    pub coverage: f64,
    /// Index of the source Gaussian in its scene.
    pub source_index: u32,
}

/// Everything about a projected Gaussian except its color. Computing this is
/// enough to decide whether the splat gets rendered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatGeometry {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub cov2d_lp: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub coverage: f64,
}

/// Extent of the `OPACITY_THRESHOLD` level set of `opacity * G_cov`: the
/// smaller of its horizontal and vertical bounding-box sizes.
pub fn coverage_extent(cov: &Matrix2<f64>, opacity: f64) -> f64 {
    let level = opacity / OPACITY_THRESHOLD;
    if level <= 1.0 {
        return 0.0;
    }
    let r2 = 2.0 * level.ln();
    let v = cov[(0, 0)].min(cov[(1, 1)]).max(0.0);
    2.0 * (r2 * v).sqrt()
}

/// Pixel coverage of a splat under the given low-pass configuration.
pub fn pixel_coverage(splat: &Splat2D, lp: &LowPassConfig) -> f64 {
    let cov = if lp.coverage_on_dilated {
        &splat.cov2d_lp
    } else {
        &splat.cov2d
    };
    coverage_extent(cov, splat.opacity)
}

/// Per-axis half extent of the region a splat can touch: the larger of the
/// 3-sigma box and the opacity level-set box.
pub fn footprint_half_extent(cov_lp: &Matrix2<f64>, opacity: f64) -> Vector2<f64> {
    let level = opacity / OPACITY_THRESHOLD;
    let r2 = if level > 1.0 { (2.0 * level.ln()).max(9.0) } else { 9.0 };
    Vector2::new((r2 * cov_lp[(0, 0)]).sqrt(), (r2 * cov_lp[(1, 1)]).sqrt())
}

fn jacobian(cam: &Camera, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * p.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * p.y * iz2,
    )
}

/// Per-camera constants for projecting many Gaussians.
#[derive(Clone, Copy, Debug)]
pub struct Projector {
    view: Matrix3<f64>,
    offset: Vector3<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: f64,
    height: f64,
    center: Vector3<f64>,
    lp: LowPassConfig,
}

impl Projector {
    pub fn new(cam: &Camera, lp: &LowPassConfig) -> Self {
        let view = cam.view_rotation();
        Projector {
            view,
            offset: cam.to_view(&Vector3::zeros()),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: f64::from(cam.width),
            height: f64::from(cam.height),
            center: cam.center(),
            lp: *lp,
        }
    }

    /// View-dependent color of a Gaussian.
    pub fn color(&self, g: &Gaussian3D) -> Vector3<f64> {
        sh::eval(&g.sh, &(g.position - self.center).normalize())
    }

    /// Projected mean, covariance and depth, culling only at the near plane.
    pub fn screen(&self, g: &Gaussian3D) -> Option<(Vector2<f64>, Matrix2<f64>, f64)> {
        let p = self.view * g.position + self.offset;
        if !(p.z > NEAR_PLANE) {
            return None;
        }
        let iz = 1.0 / p.z;
        let mean = Vector2::new(self.fx * p.x * iz + self.cx, self.fy * p.y * iz + self.cy);
        // rows of J W, then scaled by the rotated axes: cov = A A^T
        let vr = self.view * g.rotation_matrix();
        let s = g.scale();
        let (ax, ay) = (self.fx * iz, self.fy * iz);
        let (bx, by) = (-self.fx * p.x * iz * iz, -self.fy * p.y * iz * iz);
        let mut a = [[0.0; 3]; 2];
        for k in 0..3 {
            a[0][k] = (ax * vr[(0, k)] + bx * vr[(2, k)]) * s[k];
            a[1][k] = (ay * vr[(1, k)] + by * vr[(2, k)]) * s[k];
        }
        let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let off = dot(&a[0], &a[1]);
        Some((mean, Matrix2::new(dot(&a[0], &a[0]), off, off, dot(&a[1], &a[1])), p.z))
    }

    /// Projects a Gaussian without evaluating its color. Returns `None` when
    /// it lies in front of the near plane or its footprint misses the image.
    pub fn geometry(&self, g: &Gaussian3D) -> Option<SplatGeometry> {
        let (mean2d, cov2d, depth) = self.screen(g)?;
        let cov2d_lp = cov2d + Matrix2::identity() * self.lp.dilation;
        let opacity = g.opacity();
        let level = opacity / OPACITY_THRESHOLD;
        let r2 = if level > 1.0 { 2.0 * level.ln() } else { 0.0 };
        let foot = r2.max(9.0);
        let (ex, ey) = ((foot * cov2d_lp[(0, 0)]).sqrt(), (foot * cov2d_lp[(1, 1)]).sqrt());
        if mean2d.x + ex < 0.0 || mean2d.x - ex > self.width || mean2d.y + ey < 0.0 || mean2d.y - ey > self.height {
            return None;
        }
        let cov = if self.lp.coverage_on_dilated { &cov2d_lp } else { &cov2d };
        let coverage = 2.0 * (r2 * cov[(0, 0)].min(cov[(1, 1)]).max(0.0)).sqrt();
        Some(SplatGeometry {
            mean2d,
            cov2d,
            cov2d_lp,
            depth,
            opacity,
            coverage,
        })
    }
}

/// Projected mean, covariance and depth, culling only at the near plane.
pub fn screen_gaussian(g: &Gaussian3D, cam: &Camera) -> Option<(Vector2<f64>, Matrix2<f64>, f64)> {
    Projector::new(cam, &LowPassConfig::default()).screen(g)
}

/// Projects a Gaussian without evaluating its color. Returns `None` when
/// it lies in front of the near plane or its footprint misses the image.
pub fn project_geometry(g: &Gaussian3D, cam: &Camera, lp: &LowPassConfig) -> Option<SplatGeometry> {
    Projector::new(cam, lp).geometry(g)
}

/// Unit viewing direction from the camera center to the Gaussian.
pub fn view_direction(g: &Gaussian3D, cam: &Camera) -> Vector3<f64> {
    (g.position - cam.center()).normalize()
}

impl Splat2D {
    pub fn from_geometry(geo: SplatGeometry, color: Vector3<f64>, source_index: u32) -> Self {
        Splat2D {
            mean2d: geo.mean2d,
            cov2d: geo.cov2d,
            cov2d_lp: geo.cov2d_lp,
            depth: geo.depth,
            color,
            opacity: geo.opacity,
            coverage: geo.coverage,
            source_index,
        }
    }
}

pub fn project(g: &Gaussian3D, cam: &Camera, lp: &LowPassConfig, source_index: u32) -> Option<Splat2D> {
    let geo = project_geometry(g, cam, lp)?;
    let color = sh::eval(&g.sh, &view_direction(g, cam));
    Some(Splat2D::from_geometry(geo, color, source_index))
}

/// Projects every Gaussian in the scene, in scene order.
pub fn project_all(scene: &Scene, cam: &Camera, lp: &LowPassConfig) -> Vec<Splat2D> {
    scene
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, cam, lp, i as u32))
        .collect()
}

/// Gradient of a scalar loss with respect to one splat's rendered quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad {
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub mean2d: Vector2<f64>,
    /// `(xx, xy, yy)`; the off-diagonal entry is one symmetric parameter.
    pub cov2d: Vector3<f64>,
}

impl SplatGrad {
    pub fn add_assign(&mut self, o: &SplatGrad) {
        self.color += o.color;
        self.opacity += o.opacity;
        self.mean2d += o.mean2d;
        self.cov2d += o.cov2d;
    }
}

/// Pulls splat-space gradients back to the Gaussian's raw parameters.
pub fn project_backward(g: &Gaussian3D, cam: &Camera, grad: &SplatGrad) -> GaussianGrad {
    let mut out = GaussianGrad::zeros(g.sh.len());
    let w = cam.view_rotation();
    let p = cam.to_view(&g.position);
    let (x, y, z) = (p.x, p.y, p.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / z;
    let iz2 = iz * iz;

    // mean
    let gm = grad.mean2d;
    let mut d_p = Vector3::new(
        gm.x * fx * iz,
        gm.y * fy * iz,
        -gm.x * fx * x * iz2 - gm.y * fy * y * iz2,
    );

    // covariance
    let j = jacobian(cam, &p);
    let m = w * g.covariance() * w.transpose();
    let g2 = Matrix2::new(
        grad.cov2d.x,
        0.5 * grad.cov2d.y,
        0.5 * grad.cov2d.y,
        grad.cov2d.z,
    );
    let d_m: Matrix3<f64> = j.transpose() * g2 * j;
    let d_j: Matrix2x3<f64> = 2.0 * g2 * j * m;
    d_p.x += d_j[(0, 2)] * (-fx * iz2);
    d_p.y += d_j[(1, 2)] * (-fy * iz2);
    d_p.z += d_j[(0, 0)] * (-fx * iz2)
        + d_j[(0, 2)] * (2.0 * fx * x * iz2 * iz)
        + d_j[(1, 1)] * (-fy * iz2)
        + d_j[(1, 2)] * (2.0 * fy * y * iz2 * iz);
    let d_cov = w.transpose() * d_m * w;
    let (d_rot, d_ls) = covariance_vjp(g, &d_cov);
    out.rotation = d_rot;
    out.log_scale = d_ls;
    out.position = w.transpose() * d_p;

    // color through the view direction
    let offset = g.position - cam.center();
    let dist = offset.norm();
    let dir = offset / dist;
    let d_dir = sh::eval_backward(&g.sh, &dir, &grad.color, &mut out.sh);
    out.position += (d_dir - dir * dir.dot(&d_dir)) / dist;

    let o = g.opacity();
    out.opacity_logit = grad.opacity * o * (1.0 - o);
    out
}

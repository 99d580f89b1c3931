//! The 3D Gaussian primitive.
//!
//! Parameters are stored pre-activation: opacity as a logit and per-axis
//! standard deviation as a log. Activations are applied on read so the
//! optimizer can work in unconstrained space.

use nalgebra::{Matrix3, Quaternion, Vector3};

/// Observed pixel-coverage extremes of a Gaussian at its creation scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageRange {
    pub max: f64,
    pub min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: Quaternion<f64>,
    pub log_scale: Vector3<f64>,
    pub opacity_logit: f64,
    /// One RGB triple per spherical-harmonics basis function, `(D+1)^2` entries.
    pub sh: Vec<Vector3<f64>>,
    /// Level of detail, 1 is the finest.
    pub level: u8,
    /// Downsample scale at which this Gaussian was created, `4^(level-1)`.
    pub creation_scale: u32,
    /// `None` until the first render at `creation_scale`.
    pub coverage: Option<CoverageRange>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Native downsample scale of a level.
pub fn level_scale(level: u8) -> u32 {
    4u32.pow(u32::from(level.max(1)) - 1)
}

impl Gaussian3D {
    /// A level-1 Gaussian with the given activated parameters.
    pub fn new(
        position: Vector3<f64>,
        rotation: Quaternion<f64>,
        scale: Vector3<f64>,
        opacity: f64,
        sh: Vec<Vector3<f64>>,
    ) -> Self {
        let mut g = Gaussian3D {
            position,
            rotation,
            log_scale: scale.map(f64::ln),
            opacity_logit: logit(opacity),
            sh,
            level: 1,
            creation_scale: 1,
            coverage: None,
        };
        g.normalize_rotation();
        g
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn sh_degree(&self) -> usize {
        sh_degree_for_len(self.sh.len())
    }

    pub fn set_level(&mut self, level: u8) {
        self.level = level;
        self.creation_scale = level_scale(level);
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.norm();
        if n > 0.0 && n.is_finite() {
            self.rotation /= n;
        } else {
            self.rotation = Quaternion::identity();
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.rotation)
    }

    /// World-space covariance `R diag(s)^2 R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s = self.scale();
        let m = r * Matrix3::from_diagonal(&s);
        m * m.transpose()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

pub fn sh_degree_for_len(len: usize) -> usize {
    match len {
        0 | 1 => 0,
        2..=4 => 1,
        5..=9 => 2,
        _ => 3,
    }
}

pub fn sh_len_for_degree(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Rotation matrix of a (not necessarily unit) quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the raw quaternion,
/// including the normalization step.
pub fn quat_to_matrix_vjp(q: &Quaternion<f64>, g: &Matrix3<f64>) -> Quaternion<f64> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    let dw = 2.0
        * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
            + x * g[(2, 1)]);
    let dx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let dy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let dz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let dn = Quaternion::new(dw, dx, dy, dz);
    let unit = Quaternion::new(w, x, y, z);
    let radial = unit.coords.dot(&dn.coords);
    Quaternion::from((dn.coords - unit.coords * radial) / n)
}

/// Gradients of a scalar loss with respect to one Gaussian's raw parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGrad {
    pub position: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub log_scale: Vector3<f64>,
    pub opacity_logit: f64,
    pub sh: Vec<Vector3<f64>>,
}

impl GaussianGrad {
    pub fn zeros(sh_len: usize) -> Self {
        GaussianGrad {
            position: Vector3::zeros(),
            rotation: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            log_scale: Vector3::zeros(),
            opacity_logit: 0.0,
            sh: vec![Vector3::zeros(); sh_len],
        }
    }

    pub fn add_assign(&mut self, other: &GaussianGrad) {
        self.position += other.position;
        self.rotation += other.rotation;
        self.log_scale += other.log_scale;
        self.opacity_logit += other.opacity_logit;
        for (a, b) in self.sh.iter_mut().zip(&other.sh) {
            *a += b;
        }
    }
}

/// Pulls a gradient on the world covariance back to rotation and log-scale.
pub fn covariance_vjp(g: &Gaussian3D, d_cov: &Matrix3<f64>) -> (Quaternion<f64>, Vector3<f64>) {
    let r = g.rotation_matrix();
    let s = g.scale();
    let m = r * Matrix3::from_diagonal(&s);
    let sym = d_cov + d_cov.transpose();
    let d_m = sym * m;
    // m = r * diag(s)
    let d_r = d_m * Matrix3::from_diagonal(&s);
    let rt_dm = r.transpose() * d_m;
    let d_log_scale = Vector3::new(rt_dm[(0, 0)] * s.x, rt_dm[(1, 1)] * s.y, rt_dm[(2, 2)] * s.z);
    (quat_to_matrix_vjp(&g.rotation, &d_r), d_log_scale)
}

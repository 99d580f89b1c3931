//! Pinhole camera.
//!
//! Extrinsics map world points into a camera frame with x right, y up and
//! the camera looking down -z, so identity extrinsics put the camera at the
//! origin looking along -z. Projection works in a "view" frame with y and z
//! flipped (x right, y down, z forward) where pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and has its center at `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const FLIP: Matrix3<f64> = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Camera {
            id,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` roughly vertical.
    pub fn look_at(
        id: u32,
        width: u32,
        height: u32,
        focal: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let back = (eye - target).normalize();
        let right = up.cross(&back).normalize();
        let true_up = back.cross(&right);
        // rows are the camera axes expressed in world coordinates
        let rotation = Matrix3::from_rows(&[right.transpose(), true_up.transpose(), back.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            id,
            width,
            height,
            focal,
            focal,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            rotation,
            translation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.rotation.iter())
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("camera {}", self.id)));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(
                "camera",
                format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera", "zero image size"));
        }
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity())
            .abs()
            .max();
        if err > 1e-6 {
            return Err(Error::invalid(
                "camera",
                format!("rotation is not orthonormal (deviation {err:.3e})"),
            ));
        }
        Ok(())
    }

    /// The same view at `1/scale` resolution. Intrinsics and image size are
    /// divided exactly, which keeps pixel centers aligned with the full-size
    /// grid.
    pub fn at_scale(&self, scale: u32) -> Result<Camera> {
        if scale == 0 || !self.width.is_multiple_of(scale) || !self.height.is_multiple_of(scale) {
            return Err(Error::invalid(
                "scale",
                format!(
                    "{scale} does not divide image size {}x{}",
                    self.width, self.height
                ),
            ));
        }
        let s = f64::from(scale);
        Ok(Camera {
            width: self.width / scale,
            height: self.height / scale,
            fx: self.fx / s,
            fy: self.fy / s,
            cx: self.cx / s,
            cy: self.cy / s,
            ..self.clone()
        })
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Rotation from world into the view frame (z forward, y down).
    pub fn view_rotation(&self) -> Matrix3<f64> {
        FLIP * self.rotation
    }

    pub fn to_view(&self, p: &Vector3<f64>) -> Vector3<f64> {
        FLIP * (self.rotation * p + self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

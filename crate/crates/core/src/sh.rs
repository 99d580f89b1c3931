//! Real spherical harmonics up to degree 3, in the layout and sign
//! convention used by common Gaussian-splatting exporters.

use nalgebra::Vector3;

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values at a unit direction. `out.len()` selects the degree.
pub fn basis(dir: &Vector3<f64>, out: &mut [f64]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let n = out.len();
    out[0] = C0;
    if n > 1 {
        out[1] = -C1 * y;
        out[2] = C1 * z;
        out[3] = -C1 * x;
    }
    if n > 4 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out[4] = C2[0] * x * y;
        out[5] = C2[1] * y * z;
        out[6] = C2[2] * (2.0 * zz - xx - yy);
        out[7] = C2[3] * x * z;
        out[8] = C2[4] * (xx - yy);
        if n > 9 {
            out[9] = C3[0] * y * (3.0 * xx - yy);
            out[10] = C3[1] * x * y * z;
            out[11] = C3[2] * y * (4.0 * zz - xx - yy);
            out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            out[13] = C3[4] * x * (4.0 * zz - xx - yy);
            out[14] = C3[5] * z * (xx - yy);
            out[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
}

/// Partial derivatives of each basis function with respect to the
/// (unnormalized) direction components.
pub fn basis_grad(dir: &Vector3<f64>, out: &mut [Vector3<f64>]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let n = out.len();
    out[0] = Vector3::zeros();
    if n > 1 {
        out[1] = Vector3::new(0.0, -C1, 0.0);
        out[2] = Vector3::new(0.0, 0.0, C1);
        out[3] = Vector3::new(-C1, 0.0, 0.0);
    }
    if n > 4 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out[4] = C2[0] * Vector3::new(y, x, 0.0);
        out[5] = C2[1] * Vector3::new(0.0, z, y);
        out[6] = C2[2] * Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z);
        out[7] = C2[3] * Vector3::new(z, 0.0, x);
        out[8] = C2[4] * Vector3::new(2.0 * x, -2.0 * y, 0.0);
        if n > 9 {
            out[9] = C3[0] * Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
            out[10] = C3[1] * Vector3::new(y * z, x * z, x * y);
            out[11] = C3[2] * Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
            out[12] = C3[3] * Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
            out[13] = C3[4] * Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
            out[14] = C3[5] * Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy);
            out[15] = C3[6] * Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
        }
    }
}

/// Unclamped color `sum_k c_k Y_k(dir) + 0.5`.
pub fn eval_raw(coeffs: &[Vector3<f64>], dir: &Vector3<f64>) -> Vector3<f64> {
    let mut b = [0.0; 16];
    let b = &mut b[..coeffs.len()];
    basis(dir, b);
    coeffs
        .iter()
        .zip(b.iter())
        .fold(Vector3::repeat(0.5), |acc, (c, y)| acc + c * *y)
}

/// View-dependent color in `[0, 1]`.
pub fn eval(coeffs: &[Vector3<f64>], dir: &Vector3<f64>) -> Vector3<f64> {
    eval_raw(coeffs, dir).map(|v| v.clamp(0.0, 1.0))
}

/// Backward of [`eval`]: accumulates coefficient gradients into `d_coeffs`
/// and returns the gradient with respect to `dir`.
pub fn eval_backward(
    coeffs: &[Vector3<f64>],
    dir: &Vector3<f64>,
    d_color: &Vector3<f64>,
    d_coeffs: &mut [Vector3<f64>],
) -> Vector3<f64> {
    let raw = eval_raw(coeffs, dir);
    // clamped channels pass no gradient
    let g = Vector3::from_fn(|c, _| if raw[c] > 0.0 && raw[c] < 1.0 { d_color[c] } else { 0.0 });
    let n = coeffs.len();
    let mut b = [0.0; 16];
    basis(dir, &mut b[..n]);
    let mut bg = [Vector3::zeros(); 16];
    basis_grad(dir, &mut bg[..n]);
    let mut d_dir = Vector3::zeros();
    for k in 0..n {
        d_coeffs[k] += g * b[k];
        d_dir += bg[k] * g.dot(&coeffs[k]);
    }
    d_dir
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
        let v = Vector3::from(v);
        (v.norm() > 1e-3).then(|| v.normalize())
    }

    #[test]
    fn zero_coefficients_give_half_gray() {
        let c = vec![Vector3::zeros(); 4];
        assert_eq!(eval(&c, &Vector3::z()), Vector3::repeat(0.5));
    }

    #[test]
    fn degree_zero_is_isotropic() {
        let c = vec![Vector3::new(0.4, -0.2, 1.0)];
        let want = c[0] * C0 + Vector3::repeat(0.5);
        for d in [Vector3::x(), -Vector3::y(), Vector3::new(1.0, 2.0, -3.0).normalize()] {
            assert!((eval(&c, &d) - want).norm() < 1e-15);
        }
    }

    #[test]
    fn basis_grad_matches_finite_differences() {
        let d = Vector3::new(0.3, -0.5, 0.8);
        let mut g = [Vector3::zeros(); 16];
        basis_grad(&d, &mut g);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = d;
            let mut m = d;
            p[axis] += h;
            m[axis] -= h;
            let (mut bp, mut bm) = ([0.0; 16], [0.0; 16]);
            basis(&p, &mut bp);
            basis(&m, &mut bm);
            for k in 0..16 {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-8, "k={k} axis={axis}");
            }
        }
    }

    proptest! {
        #[test]
        fn degree_one_is_odd_around_dc(v in proptest::array::uniform3(-1.0..1.0f64),
                                       c in proptest::array::uniform12(-0.3..0.3f64)) {
            let Some(d) = unit(v) else { return Ok(()) };
            let coeffs: Vec<Vector3<f64>> = c.chunks(3).map(|x| Vector3::new(x[0], x[1], x[2])).collect();
            let dc = coeffs[0] * C0 + Vector3::repeat(0.5);
            let sum = eval(&coeffs, &d) + eval(&coeffs, &(-d));
            prop_assert!((sum - 2.0 * dc).norm() < 1e-12);
        }
    }
}

//! PSNR and SSIM.
//!
//! SSIM uses an 11x11 Gaussian window with standard deviation 1.5 and zero
//! padding at the borders, averaged over all pixels and channels.

use nalgebra::Vector3;

use crate::error::Result;
use crate::image::Image;

/// Reported in place of an infinite PSNR.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_size(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).norm_squared()).sum();
    Ok(sum / (3 * a.len()) as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "same"-size convolution with zero padding. The window is
/// symmetric, so this is also its own adjoint.
pub fn blur(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = gaussian_window();
    let r = SSIM_WINDOW as isize / 2;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && (xx as usize) < width {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let yy = y as isize + t as isize - r;
                if yy >= 0 && (yy as usize) < height {
                    acc += kv * tmp[yy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], w: usize, h: usize) -> Moments {
    let mx = blur(x, w, h);
    let my = blur(y, w, h);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let ex = blur(&xx, w, h);
    let ey = blur(&yy, w, h);
    let exy = blur(&xy, w, h);
    let n = x.len();
    Moments {
        sxx: (0..n).map(|i| ex[i] - mx[i] * mx[i]).collect(),
        syy: (0..n).map(|i| ey[i] - my[i] * my[i]).collect(),
        sxy: (0..n).map(|i| exy[i] - mx[i] * my[i]).collect(),
        mx,
        my,
    }
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_impl(a, b, false).map(|r| r.0)
}

/// SSIM of `x` against `y` and its gradient with respect to `x`.
pub fn ssim_with_grad(x: &Image, y: &Image) -> Result<(f64, Image)> {
    ssim_impl(x, y, true).map(|(s, g)| (s, g.expect("gradient requested")))
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    a.check_same_size(b)?;
    if a.is_empty() {
        return Ok((1.0, want_grad.then(|| a.clone())));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    let n = a.len();
    let total = (3 * n) as f64;
    let mut sum = 0.0;
    let mut grad = want_grad.then(|| Image::new(a.width, a.height, Vector3::zeros()));
    for c in 0..3 {
        let x = a.channel(c);
        let y = b.channel(c);
        let m = moments(&x, &y, w, h);
        let mut dm = vec![0.0; n];
        let mut de = vec![0.0; n];
        let mut df = vec![0.0; n];
        for i in 0..n {
            let a1 = 2.0 * m.mx[i] * m.my[i] + SSIM_C1;
            let a2 = 2.0 * m.sxy[i] + SSIM_C2;
            let b1 = m.mx[i] * m.mx[i] + m.my[i] * m.my[i] + SSIM_C1;
            let b2 = m.sxx[i] + m.syy[i] + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            sum += s;
            if want_grad {
                // s as a function of blurred x, blurred x^2 and blurred xy
                let mx = m.mx[i];
                dm[i] = (2.0 * m.my[i] * (a2 - a1) / (b1 * b2) - s * (2.0 * mx / b1 - 2.0 * mx / b2)) / total;
                de[i] = -s / b2 / total;
                df[i] = 2.0 * a1 / (b1 * b2) / total;
            }
        }
        if let Some(g) = grad.as_mut() {
            let bm = blur(&dm, w, h);
            let be = blur(&de, w, h);
            let bf = blur(&df, w, h);
            for i in 0..n {
                g.pixels[i][c] = bm[i] + 2.0 * x[i] * be[i] + y[i] * bf[i];
            }
        }
    }
    Ok((sum / total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: u32, h: u32) -> Image {
        Image::from_fn(w, h, |x, y| {
            Vector3::new(
                f64::from(x) / f64::from(w),
                f64::from(y) / f64::from(h),
                f64::from((x * 7 + y * 3) % 5) / 5.0,
            )
        })
    }

    #[test]
    fn psnr_examples() {
        let a = Image::new(4, 4, Vector3::zeros());
        let b = Image::new(4, 4, Vector3::repeat(1.0));
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
        let c = Image::new(4, 4, Vector3::repeat(0.1));
        assert!((psnr(&a, &c).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn window_sums_to_one() {
        assert!((gaussian_window().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = ramp(20, 15);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = Image::from_fn(20, 15, |x, y| Vector3::repeat(1.0) - a.get(x, y));
        assert!(ssim(&a, &inv).unwrap() < 1.0);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let x = ramp(13, 9);
        let y = Image::from_fn(13, 9, |i, j| Vector3::new(0.3 + 0.02 * f64::from(i), 0.5, f64::from((i + j) % 3) / 3.0));
        let (_, g) = ssim_with_grad(&x, &y).unwrap();
        let h = 1e-6;
        for &(i, c) in &[(0usize, 0usize), (17, 1), (60, 2), (116, 0)] {
            let mut p = x.clone();
            let mut m = x.clone();
            p.pixels[i][c] += h;
            m.pixels[i][c] -= h;
            let fd = (ssim(&p, &y).unwrap() - ssim(&m, &y).unwrap()) / (2.0 * h);
            assert!((fd - g.pixels[i][c]).abs() < 1e-6 * fd.abs().max(1e-3), "{i} {c}: {fd} vs {}", g.pixels[i][c]);
        }
    }
}

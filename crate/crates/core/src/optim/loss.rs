//! Photometric loss `(1 - lambda) L1 + lambda (1 - SSIM)`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::metrics::{ssim, ssim_with_grad};
use crate::image::Image;

pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_size(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).abs().sum()).sum();
    Ok(sum / (3 * a.len()) as f64)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::invalid("loss lambda", format!("{lambda} outside [0, 1]")))
    }
}

pub fn loss(rendered: &Image, truth: &Image, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok((1.0 - lambda) * l1(rendered, truth)? + lambda * (1.0 - ssim(rendered, truth)?))
}

/// Loss and its gradient with respect to the rendered image.
pub fn loss_with_grad(rendered: &Image, truth: &Image, lambda: f64) -> Result<(f64, Image)> {
    check_lambda(lambda)?;
    let l1v = l1(rendered, truth)?;
    let (s, ds) = ssim_with_grad(rendered, truth)?;
    let n = (3 * rendered.len().max(1)) as f64;
    let w1 = (1.0 - lambda) / n;
    let pixels = rendered
        .pixels
        .iter()
        .zip(&truth.pixels)
        .zip(&ds.pixels)
        .map(|((r, t), d)| {
            let sign = Vector3::from_fn(|c, _| {
                let e = r[c] - t[c];
                if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            sign * w1 - d * lambda
        })
        .collect();
    Ok((
        (1.0 - lambda) * l1v + lambda * (1.0 - s),
        Image {
            width: rendered.width,
            height: rendered.height,
            pixels,
        },
    ))
}

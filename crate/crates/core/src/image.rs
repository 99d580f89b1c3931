use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Linear RGB image, row-major, one `Vector3` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Vector3<f64>>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Vector3<f64>) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Vector3<f64>) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Vector3<f64> {
        self.pixels[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, v: Vector3<f64>) {
        let i = self.index(x, y);
        self.pixels[i] = v;
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// One color channel as a flat row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }

    pub fn check_same_size(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimensions(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Box (area-average) downsampling by an integer factor.
    pub fn downsample(&self, scale: u32) -> Result<Image> {
        if scale == 0 || !self.width.is_multiple_of(scale) || !self.height.is_multiple_of(scale) {
            return Err(Error::invalid(
                "scale",
                format!("{scale} does not divide {}x{}", self.width, self.height),
            ));
        }
        let (w, h) = (self.width / scale, self.height / scale);
        let norm = 1.0 / f64::from(scale * scale);
        Ok(Image::from_fn(w, h, |x, y| {
            let mut acc = Vector3::zeros();
            for dy in 0..scale {
                for dx in 0..scale {
                    acc += self.get(x * scale + dx, y * scale + dy);
                }
            }
            acc * norm
        }))
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_averages_blocks() {
        let img = Image::from_fn(4, 2, |x, y| Vector3::repeat(f64::from(x + 4 * y)));
        let d = img.downsample(2).unwrap();
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.get(0, 0), Vector3::repeat((0.0 + 1.0 + 4.0 + 5.0) / 4.0));
        assert_eq!(d.get(1, 0), Vector3::repeat((2.0 + 3.0 + 6.0 + 7.0) / 4.0));
        assert!(img.downsample(3).is_err());
    }
}

//! 8-bit PNG and PPM images. Linear values in `[0, 1]` map to bytes by
//! `floor(255 v + 0.5)` after clamping.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn dequantize(b: u8) -> f64 {
    f64::from(b) / 255.0
}

fn to_bytes(img: &Image) -> Vec<u8> {
    img.pixels.iter().flat_map(|p| [quantize(p.x), quantize(p.y), quantize(p.z)]).collect()
}

fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Image {
    Image {
        width,
        height,
        pixels: bytes
            .chunks_exact(3)
            .map(|c| Vector3::new(dequantize(c[0]), dequantize(c[1]), dequantize(c[2])))
            .collect(),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .ok_or_else(|| Error::ImageFormat {
            path: path.to_path_buf(),
            message: "missing file extension (expected .png or .ppm)".into(),
        })
}

pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    match extension(path)?.as_str() {
        "png" => {
            image::save_buffer(path, &to_bytes(img), img.width, img.height, image::ColorType::Rgb8)?;
            Ok(())
        }
        "ppm" => {
            let mut s = format!("P3\n{} {}\n255\n", img.width, img.height);
            for row in to_bytes(img).chunks(3 * img.width.max(1) as usize) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
            fs::write(path, s)?;
            Ok(())
        }
        other => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            message: format!("unsupported extension .{other}"),
        }),
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path)?.as_str() {
        "png" => {
            let img = image::open(path)?.to_rgb8();
            Ok(from_bytes(img.width(), img.height(), img.as_raw()))
        }
        "ppm" => parse_ppm(&fs::read(path)?).map_err(|message| Error::ImageFormat {
            path: path.to_path_buf(),
            message,
        }),
        other => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            message: format!("unsupported extension .{other}"),
        }),
    }
}

/// Reads ASCII (`P3`) or binary (`P6`) PPM with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("unexpected end of file".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |t: String| t.parse::<u32>().map_err(|_| format!("expected a number, found {t:?}"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let n = 3 * width as usize * height as usize;
    let data: Vec<u8> = match magic.as_str() {
        "P3" => (0..n)
            .map(|_| {
                let v = num(token()?)?;
                u8::try_from(v).map_err(|_| format!("sample {v} exceeds 255"))
            })
            .collect::<std::result::Result<_, _>>()?,
        "P6" => {
            let start = pos + 1;
            bytes
                .get(start..start + n)
                .ok_or_else(|| format!("expected {n} bytes of pixel data"))?
                .to_vec()
        }
        other => return Err(format!("unsupported PPM type {other:?}")),
    };
    Ok(from_bytes(width, height, &data))
}

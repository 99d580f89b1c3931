//! Plain-text camera lists.
//!
//! One camera per line: `id width height fx fy cx cy` followed by the
//! world-to-camera rotation (9 values, row-major) and translation (3
//! values), whitespace separated. A camera maps world point `p` to
//! `R p + t` and looks down its local -z axis with +y up, so identity
//! extrinsics put it at the origin looking down world -z. Blank lines and
//! lines starting with `#` are skipped.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};

const FIELDS: usize = 19;

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut cams = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens: Vec<(usize, &str)> = Vec::with_capacity(FIELDS);
        let mut col = 0;
        for part in line.split_inclusive(char::is_whitespace) {
            let tok = part.trim_end();
            if !tok.is_empty() {
                tokens.push((col + 1, tok));
            }
            col += part.chars().count();
        }
        let err = |column: usize, message: String| Error::CameraParse {
            line: line_no,
            column,
            message,
        };
        if tokens.len() != FIELDS {
            let column = tokens.get(FIELDS).map_or(line.chars().count() + 1, |t| t.0);
            return Err(err(column, format!("expected {FIELDS} fields, found {}", tokens.len())));
        }
        let int = |i: usize| -> Result<u32> {
            tokens[i].1.parse().map_err(|_| err(tokens[i].0, format!("expected an unsigned integer, found {:?}", tokens[i].1)))
        };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = tokens[i].1.parse().map_err(|_| err(tokens[i].0, format!("expected a number, found {:?}", tokens[i].1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(tokens[i].0, format!("non-finite value {:?}", tokens[i].1)))
            }
        };
        let rot: Vec<f64> = (7..16).map(num).collect::<Result<_>>()?;
        let cam = Camera::new(
            int(0)?,
            int(1)?,
            int(2)?,
            num(3)?,
            num(4)?,
            num(5)?,
            num(6)?,
            Matrix3::from_row_slice(&rot),
            Vector3::new(num(16)?, num(17)?, num(18)?),
        )
        .map_err(|e| err(1, e.to_string()))?;
        cams.push(cam);
    }
    Ok(cams)
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    parse_cameras(&fs::read_to_string(path)?)
}

pub fn format_cameras(cams: &[Camera]) -> String {
    let mut s = String::from("# id width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n");
    for c in cams {
        let mut fields = vec![c.id.to_string(), c.width.to_string(), c.height.to_string()];
        fields.extend([c.fx, c.fy, c.cx, c.cy].iter().map(|v| v.to_string()));
        for r in 0..3 {
            fields.extend((0..3).map(|k| c.rotation[(r, k)].to_string()));
        }
        fields.extend(c.translation.iter().map(|v| v.to_string()));
        s.push_str(&fields.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_cameras(cams: &[Camera], path: &Path) -> Result<()> {
    fs::write(path, format_cameras(cams))?;
    Ok(())
}

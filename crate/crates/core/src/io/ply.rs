//! Binary little-endian PLY in the layout common Gaussian-splatting tools
//! exchange, plus optional per-vertex `level`, `coverage_max`,
//! `coverage_min` and `creation_scale` properties. Scene-wide values are
//! kept in `comment mssplat <key> <value>` header lines.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::{level_scale, CoverageRange, Gaussian3D};
use crate::scene::{Scene, DEFAULT_L_MAX};

/// Float width used for written properties.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyPrecision {
    /// `float`; what most viewers expect. Rounds every value to f32.
    F32,
    /// `double`; round-trips exactly.
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Kind {
    fn parse(s: &str) -> Option<Kind> {
        Some(match s {
            "char" | "int8" => Kind::I8,
            "uchar" | "uint8" => Kind::U8,
            "short" | "int16" => Kind::I16,
            "ushort" | "uint16" => Kind::U16,
            "int" | "int32" => Kind::I32,
            "uint" | "uint32" => Kind::U32,
            "float" | "float32" => Kind::F32,
            "double" | "float64" => Kind::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Kind::I8 | Kind::U8 => 1,
            Kind::I16 | Kind::U16 => 2,
            Kind::I32 | Kind::U32 | Kind::F32 => 4,
            Kind::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Kind::I8 => f64::from(b[0] as i8),
            Kind::U8 => f64::from(b[0]),
            Kind::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Kind::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Kind::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Kind::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Kind::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Kind::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, Kind)>,
    comments: Vec<(String, String)>,
    body_offset: usize,
}

fn ply_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        offset: offset as u64,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ply_err(start, "header ends without end_header"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&bytes[start..start + end])
            .map_err(|_| ply_err(start, "header is not valid text"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (at, magic) = next_line(&mut offset)?;
    if magic != "ply" {
        return Err(ply_err(at, format!("expected 'ply', found {magic:?}")));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut comments = Vec::new();
    let mut in_vertex = false;
    let mut saw_format = false;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => saw_format = true,
            ["format", other, ..] => return Err(ply_err(at, format!("unsupported format {other}"))),
            ["comment", "mssplat", key, value @ ..] => comments.push((key.to_string(), value.join(" "))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                if vertex_count.is_some() {
                    // elements after the vertices are ignored
                    in_vertex = false;
                    continue;
                }
                if *name != "vertex" {
                    return Err(ply_err(at, format!("element {name} precedes the vertex element")));
                }
                vertex_count = Some(
                    count
                        .parse::<usize>()
                        .map_err(|_| ply_err(at, format!("bad vertex count {count:?}")))?,
                );
                in_vertex = true;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(ply_err(at, "list properties are not supported on vertices"));
            }
            ["property", kind, name] => {
                if in_vertex {
                    let k = Kind::parse(kind).ok_or_else(|| ply_err(at, format!("unknown property type {kind}")))?;
                    properties.push((name.to_string(), k));
                }
            }
            ["property", ..] => {}
            _ => return Err(ply_err(at, format!("malformed header line {line:?}"))),
        }
    }
    if !saw_format {
        return Err(ply_err(0, "missing 'format binary_little_endian 1.0'"));
    }
    Ok(Header {
        vertex_count: vertex_count.ok_or_else(|| ply_err(offset, "no vertex element"))?,
        properties,
        comments,
        body_offset: offset,
    })
}

fn sh_rest_degree(rest: usize, at: usize) -> Result<usize> {
    (0..=3)
        .find(|d| 3 * ((d + 1) * (d + 1) - 1) == rest)
        .ok_or_else(|| ply_err(at, format!("{rest} f_rest properties do not match any SH degree up to 3")))
}

pub fn read_ply(path: &Path) -> Result<Scene> {
    parse_ply(&fs::read(path)?)
}

pub fn parse_ply(bytes: &[u8]) -> Result<Scene> {
    let h = parse_header(bytes)?;
    let index = |name: &str| h.properties.iter().position(|(n, _)| n == name);
    let require = |name: &str| index(name).ok_or_else(|| ply_err(h.body_offset, format!("missing property {name}")));
    let rest = (0..).take_while(|k| index(&format!("f_rest_{k}")).is_some()).count();
    let degree = sh_rest_degree(rest, h.body_offset)?;
    let per_channel = rest / 3;

    let pos = [require("x")?, require("y")?, require("z")?];
    let dc = [require("f_dc_0")?, require("f_dc_1")?, require("f_dc_2")?];
    let rest_idx: Vec<usize> = (0..rest).map(|k| require(&format!("f_rest_{k}"))).collect::<Result<_>>()?;
    let opacity = require("opacity")?;
    let scale = [require("scale_0")?, require("scale_1")?, require("scale_2")?];
    let rot = [require("rot_0")?, require("rot_1")?, require("rot_2")?, require("rot_3")?];
    let level = index("level");
    let cov_max = index("coverage_max");
    let cov_min = index("coverage_min");
    let creation = index("creation_scale");

    let mut offsets = Vec::with_capacity(h.properties.len());
    let mut stride = 0;
    for (_, k) in &h.properties {
        offsets.push(stride);
        stride += k.size();
    }
    let body = &bytes[h.body_offset..];
    let complete = body.len() / stride.max(1);
    if complete < h.vertex_count {
        return Err(ply_err(
            h.body_offset + complete * stride,
            format!("expected {} vertices, file holds {complete} complete ones", h.vertex_count),
        ));
    }

    let mut gaussians = Vec::with_capacity(h.vertex_count);
    for v in 0..h.vertex_count {
        let row_at = h.body_offset + v * stride;
        let row = &body[v * stride..(v + 1) * stride];
        let get = |p: usize| -> Result<f64> {
            let x = h.properties[p].1.read(&row[offsets[p]..]);
            if x.is_finite() {
                Ok(x)
            } else {
                Err(ply_err(row_at + offsets[p], format!("non-finite {} in vertex {v}", h.properties[p].0)))
            }
        };
        let mut sh = vec![Vector3::new(get(dc[0])?, get(dc[1])?, get(dc[2])?)];
        for k in 0..per_channel {
            sh.push(Vector3::new(
                get(rest_idx[k])?,
                get(rest_idx[per_channel + k])?,
                get(rest_idx[2 * per_channel + k])?,
            ));
        }
        let lvl = match level {
            Some(p) => {
                let l = get(p)?;
                if !(1.0..=255.0).contains(&l) {
                    return Err(ply_err(row_at + offsets[p], format!("level {l} in vertex {v}")));
                }
                l as u8
            }
            None => 1,
        };
        let coverage = match (cov_max, cov_min) {
            (Some(a), Some(b)) => {
                let (mx, mn) = (get(a)?, get(b)?);
                (mx > 0.0 && mn > 0.0).then_some(CoverageRange { max: mx, min: mn })
            }
            _ => None,
        };
        let mut g = Gaussian3D {
            position: Vector3::new(get(pos[0])?, get(pos[1])?, get(pos[2])?),
            rotation: Quaternion::new(get(rot[0])?, get(rot[1])?, get(rot[2])?, get(rot[3])?),
            log_scale: Vector3::new(get(scale[0])?, get(scale[1])?, get(scale[2])?),
            opacity_logit: get(opacity)?,
            sh,
            level: lvl,
            creation_scale: match creation {
                Some(p) => get(p)? as u32,
                None => level_scale(lvl),
            },
            coverage,
        };
        if g.rotation.norm() == 0.0 {
            return Err(ply_err(row_at + offsets[rot[0]], format!("zero quaternion in vertex {v}")));
        }
        if (g.rotation.norm() - 1.0).abs() > 1e-6 {
            g.normalize_rotation();
        }
        gaussians.push(g);
    }

    let mut scene = Scene::new(gaussians, degree);
    for (key, value) in &h.comments {
        let bad = || ply_err(0, format!("bad header comment {key} {value:?}"));
        match key.as_str() {
            "l_max" => scene.l_max = value.parse().map_err(|_| bad())?,
            "bound_b" => scene.bound_b = value.parse().map_err(|_| bad())?,
            "train_scales" => {
                let v: Vec<u32> = value.split_whitespace().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                let [lo, hi] = v[..] else { return Err(bad()) };
                scene.train_scale_min = lo;
                scene.train_scale_max = hi;
            }
            _ => {}
        }
    }
    if scene.l_max == 0 {
        scene.l_max = DEFAULT_L_MAX;
    }
    scene.validate()?;
    Ok(scene)
}

pub fn write_ply(scene: &Scene, path: &Path) -> Result<()> {
    write_ply_with(scene, path, PlyPrecision::F64)
}

pub fn write_ply_with(scene: &Scene, path: &Path, precision: PlyPrecision) -> Result<()> {
    fs::write(path, encode_ply(scene, precision)?)?;
    Ok(())
}

pub fn encode_ply(scene: &Scene, precision: PlyPrecision) -> Result<Vec<u8>> {
    let sh_len = scene.gaussians.first().map_or((scene.sh_degree + 1).pow(2), |g| g.sh.len());
    if scene.gaussians.iter().any(|g| g.sh.len() != sh_len) {
        return Err(Error::invalid("scene", "Gaussians have different SH degrees"));
    }
    let float = match precision {
        PlyPrecision::F32 => "float",
        PlyPrecision::F64 => "double",
    };
    let mut head = String::from("ply\nformat binary_little_endian 1.0\n");
    head.push_str(&format!("comment mssplat l_max {}\n", scene.l_max));
    head.push_str(&format!("comment mssplat bound_b {:?}\n", scene.bound_b));
    head.push_str(&format!(
        "comment mssplat train_scales {} {}\n",
        scene.train_scale_min, scene.train_scale_max
    ));
    head.push_str(&format!("element vertex {}\n", scene.len()));
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * (sh_len - 1)).map(|k| format!("f_rest_{k}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    for n in &names {
        head.push_str(&format!("property {float} {n}\n"));
    }
    head.push_str("property uchar level\n");
    head.push_str(&format!("property {float} coverage_max\nproperty {float} coverage_min\n"));
    head.push_str("property int creation_scale\nend_header\n");

    let mut out = head.into_bytes();
    let put = |out: &mut Vec<u8>, v: f64| match precision {
        PlyPrecision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        PlyPrecision::F64 => out.extend_from_slice(&v.to_le_bytes()),
    };
    for g in &scene.gaussians {
        for v in g.position.iter() {
            put(&mut out, *v);
        }
        for _ in 0..3 {
            put(&mut out, 0.0);
        }
        for c in 0..3 {
            put(&mut out, g.sh[0][c]);
        }
        // channel-major: all red coefficients, then green, then blue
        for c in 0..3 {
            for k in 1..sh_len {
                put(&mut out, g.sh[k][c]);
            }
        }
        put(&mut out, g.opacity_logit);
        for v in g.log_scale.iter() {
            put(&mut out, *v);
        }
        for v in [g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k] {
            put(&mut out, v);
        }
        out.push(g.level);
        let (mx, mn) = g.coverage.map_or((-1.0, -1.0), |r| (r.max, r.min));
        put(&mut out, mx);
        put(&mut out, mn);
        out.extend_from_slice(&(g.creation_scale as i32).to_le_bytes());
    }
    Ok(out)
}

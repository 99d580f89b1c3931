mod common;

use mssplat::io::cameras::{format_cameras, parse_cameras};
use mssplat::io::images::{dequantize, parse_ppm, quantize};
use mssplat::io::ply::{encode_ply, parse_ply};
use mssplat::io::{read_image, read_ply, write_image, write_ply, PlyPrecision};
use mssplat::{Camera, Error, Image};
use nalgebra::{Matrix3, Vector3};

#[test]
fn ply_round_trip_is_exact() {
    for degree in 0..=3 {
        let scene = common::random_scene(degree as u64, 37, degree);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        write_ply(&scene, &path).unwrap();
        assert_eq!(read_ply(&path).unwrap(), scene);
    }
}

#[test]
fn ply_single_precision_rounds_to_f32() {
    let scene = common::random_scene(4, 20, 1);
    let back = parse_ply(&encode_ply(&scene, PlyPrecision::F32).unwrap()).unwrap();
    for (a, b) in scene.gaussians.iter().zip(&back.gaussians) {
        assert_eq!(b.position, a.position.map(|v| f64::from(v as f32)));
        assert_eq!(b.opacity_logit, f64::from(a.opacity_logit as f32));
        assert_eq!((a.level, a.creation_scale), (b.level, b.creation_scale));
        assert!((b.rotation.norm() - 1.0).abs() < 1e-6);
    }
}

/// A file as plain splatting tools write it: float properties, no extensions.
fn plain_ply(rows: &[[f32; 17]]) -> Vec<u8> {
    let names = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
        "rot_0", "rot_1", "rot_2", "rot_3",
    ];
    let mut out = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", rows.len());
    for n in names {
        out.push_str(&format!("property float {n}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for r in rows {
        for v in r {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

#[test]
fn ply_without_extensions_gets_defaults() {
    let row = [
        0.5, -1.0, 2.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 1.5, -2.0, -2.5, -3.0, 1.0, 0.0, 0.0, 0.0,
    ];
    let scene = parse_ply(&plain_ply(&[row, row])).unwrap();
    assert_eq!(scene.len(), 2);
    assert_eq!(scene.sh_degree, 0);
    for g in &scene.gaussians {
        assert_eq!(g.level, 1);
        assert_eq!(g.creation_scale, 1);
        assert_eq!(g.coverage, None);
        assert_eq!(g.position, Vector3::new(0.5, -1.0, 2.0));
        assert_eq!(g.opacity_logit, 1.5);
    }
}

#[test]
fn truncated_ply_names_vertex_counts() {
    let row = [0.0; 17];
    let mut row = row;
    row[13] = 1.0;
    let mut bytes = plain_ply(&[row, row, row]);
    bytes.truncate(bytes.len() - 10);
    match parse_ply(&bytes) {
        Err(Error::Ply { message, .. }) => {
            assert!(message.contains("expected 3 vertices"), "{message}");
            assert!(message.contains("2 complete"), "{message}");
        }
        other => panic!("expected a PLY error, got {other:?}"),
    }
}

#[test]
fn ply_rejects_garbage() {
    assert!(matches!(parse_ply(b"not a ply"), Err(Error::Ply { .. })));
    let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
    assert!(matches!(parse_ply(ascii), Err(Error::Ply { .. })));
}

#[test]
fn camera_round_trip() {
    let cams = vec![
        Camera::look_at(3, 64, 48, 50.0, Vector3::new(1.0, 2.0, 3.0), Vector3::zeros(), Vector3::y()).unwrap(),
        Camera::new(7, 10, 20, 11.5, 12.5, 5.25, 9.75, Matrix3::identity(), Vector3::new(0.1, 0.2, 0.3)).unwrap(),
    ];
    let text = format!("# two cameras\n\n{}", format_cameras(&cams));
    assert_eq!(parse_cameras(&text).unwrap(), cams);
}

#[test]
fn identity_extrinsics_look_down_negative_z() {
    let cams = parse_cameras("0 8 8 10 10 4 4 1 0 0 0 1 0 0 0 1 0 0 0\n").unwrap();
    let c = &cams[0];
    assert_eq!(c.center(), Vector3::zeros());
    // a point in front of the camera has positive view depth
    assert!(c.to_view(&Vector3::new(0.0, 0.0, -1.0)).z > 0.0);
    // world +y projects toward the top of the image
    let up = c.to_view(&Vector3::new(0.0, 1.0, -1.0));
    assert!(up.y < 0.0);
}

#[test]
fn camera_errors_point_at_the_field() {
    match parse_cameras("# header\n0 8 8 10 10 4 4 1 0 0 0 1 0 0 0 1 0 0 x\n") {
        Err(Error::CameraParse { line, column, .. }) => assert_eq!((line, column), (2, 39)),
        other => panic!("{other:?}"),
    }
    match parse_cameras("0 8 8 10\n") {
        Err(Error::CameraParse { line, message, .. }) => {
            assert_eq!(line, 1);
            assert!(message.contains("found 4"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert!(parse_cameras("0 8 8 10 10 4 4 2 0 0 0 1 0 0 0 1 0 0 0\n").is_err());
}

fn gradient(w: u32, h: u32) -> Image {
    Image::from_fn(w, h, |x, y| {
        Vector3::new(f64::from(x) / f64::from(w), f64::from(y) / f64::from(h), 0.37)
    })
}

#[test]
fn images_round_trip_through_quantization() {
    let img = gradient(13, 7);
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.png", "a.ppm"] {
        let path = dir.path().join(name);
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!((back.width, back.height), (13, 7));
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert_eq!(b[c], dequantize(quantize(a[c])));
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        // second pass is lossless
        write_image(&back, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), back);
    }
}

#[test]
fn quantization_rounds_half_up_and_clamps() {
    assert_eq!(quantize(0.5), 128);
    assert_eq!(quantize(-3.0), 0);
    assert_eq!(quantize(7.0), 255);
    assert_eq!(quantize(1.0 / 255.0), 1);
}

#[test]
fn binary_ppm_is_read() {
    let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 255, 51, 10, 20, 30]);
    let img = parse_ppm(&bytes).unwrap();
    assert_eq!(img.get(0, 0), Vector3::new(0.0, 1.0, 0.2));
    assert_eq!(img.get(1, 0), Vector3::new(10.0, 20.0, 30.0) / 255.0);
    assert!(parse_ppm(b"P6\n2 1\n255\n\x01").is_err());
}

//! Scene, camera and image files, and synthetic test scenes.

pub mod cameras;
pub mod images;
pub mod ply;
pub mod synth;

pub use cameras::{read_cameras, write_cameras};
pub use images::{read_image, write_image};
pub use ply::{read_ply, write_ply, write_ply_with, PlyPrecision};
pub use synth::{synth_scene, SynthKind, SynthParams, SynthScene};

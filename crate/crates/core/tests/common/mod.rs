#![allow(dead_code)]

use mssplat::gaussian::Gaussian3D;
use mssplat::{CoverageRange, Scene};
use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, sh_degree: usize) -> Gaussian3D {
    let sh_len = (sh_degree + 1) * (sh_degree + 1);
    Gaussian3D::new(
        Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-4.0..-2.0)),
        Quaternion::new(
            rng.random_range(0.2..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ),
        Vector3::from_fn(|_, _| rng.random_range(0.01..0.2)),
        rng.random_range(0.05..0.95),
        (0..sh_len).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
    )
}

/// Random Gaussians with mixed levels and coverage ranges.
pub fn random_scene(seed: u64, n: usize, sh_degree: usize) -> Scene {
    let mut r = rng(seed);
    let gs = (0..n)
        .map(|i| {
            let mut g = random_gaussian(&mut r, sh_degree);
            g.set_level(1 + (i % 4) as u8);
            if i % 3 != 0 {
                let min = r.random_range(0.1..3.0);
                g.coverage = Some(CoverageRange {
                    max: min * r.random_range(1.0..4.0),
                    min,
                });
            }
            g
        })
        .collect();
    let mut s = Scene::new(gs, sh_degree);
    s.bound_b = 2.5;
    s.train_scale_min = 1;
    s.train_scale_max = 64;
    s
}

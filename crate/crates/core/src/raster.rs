//! Tile-based front-to-back alpha compositing of splats.
//!
//! Each pixel receives `sum_i c_i a_i T_i + T_final * background`, with
//! `a_i = min(0.99, opacity_i * exp(-0.5 d^T cov_lp^-1 d))` and
//! `T_i = prod_{j<i} (1 - a_j)`. Terms with `a_i < 1/255` are skipped and a
//! pixel stops once its transmittance falls below `1e-4`. Splats are
//! visited in nondecreasing depth, ties broken by source index.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::projection::{SplatGrad, Splat2D, OPACITY_THRESHOLD};
use crate::stats::RenderStats;

pub const TILE_SIZE: u32 = 16;
pub const ALPHA_MAX: f64 = 0.99;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

/// Splat data in the form the inner loop wants.
#[derive(Clone, Copy, Debug)]
struct Prepared {
    mean: Vector2<f64>,
    /// Inverse of `cov2d_lp` as `(xx, xy, yy)`.
    conic: Vector3<f64>,
    opacity: f64,
    color: Vector3<f64>,
    /// Exponents below this cannot reach the opacity threshold.
    power_cut: f64,
    /// Inclusive pixel rectangle `(x0, y0, x1, y1)` the splat can touch.
    rect: Option<[u32; 4]>,
}

fn check_finite(s: &Splat2D, i: usize) -> Result<()> {
    let ok = s.mean2d.iter().all(|v| v.is_finite())
        && s.cov2d_lp.iter().all(|v| v.is_finite())
        && s.color.iter().all(|v| v.is_finite())
        && s.opacity.is_finite()
        && s.depth.is_finite();
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "splat {i} (source {}): mean {:?}, cov {:?}, opacity {}, depth {}",
            s.source_index,
            s.mean2d.as_slice(),
            s.cov2d_lp.as_slice(),
            s.opacity,
            s.depth
        )))
    }
}

fn prepare(s: &Splat2D, cam: &Camera) -> Result<Prepared> {
    let cov = &s.cov2d_lp;
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if !(det > 0.0 && cov[(0, 0)] > 0.0) {
        return Err(Error::invalid(
            "splat",
            format!("covariance of source {} is not positive definite", s.source_index),
        ));
    }
    let conic = Vector3::new(cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det);
    let level = s.opacity / OPACITY_THRESHOLD;
    let (power_cut, rect) = if level > 1.0 {
        let r2 = 2.0 * level.ln();
        // slack so rounding never drops a pixel the exact test would keep
        let ex = (r2 * cov[(0, 0)]).sqrt() * (1.0 + 1e-9) + 1e-9;
        let ey = (r2 * cov[(1, 1)]).sqrt() * (1.0 + 1e-9) + 1e-9;
        let x0 = (s.mean2d.x - ex - 0.5).ceil().max(0.0);
        let x1 = (s.mean2d.x + ex - 0.5).floor().min(f64::from(cam.width) - 1.0);
        let y0 = (s.mean2d.y - ey - 0.5).ceil().max(0.0);
        let y1 = (s.mean2d.y + ey - 0.5).floor().min(f64::from(cam.height) - 1.0);
        let rect = (x0 <= x1 && y0 <= y1).then_some([x0 as u32, y0 as u32, x1 as u32, y1 as u32]);
        (-level.ln() - 1e-9, rect)
    } else {
        (f64::INFINITY, None)
    };
    Ok(Prepared {
        mean: s.mean2d,
        conic,
        opacity: s.opacity,
        color: s.color,
        power_cut,
        rect,
    })
}

/// Opacity contribution of a splat at a pixel center, `None` when skipped.
/// Also returns the Gaussian weight and whether the 0.99 clamp engaged.
#[inline]
fn alpha_at(p: &Prepared, px: f64, py: f64) -> Option<(f64, f64, bool)> {
    let dx = px - p.mean.x;
    let dy = py - p.mean.y;
    let power = -0.5 * (p.conic.x * dx * dx + p.conic.z * dy * dy) - p.conic.y * dx * dy;
    if power < p.power_cut || power > 0.0 {
        return None;
    }
    let weight = power.exp();
    let raw = p.opacity * weight;
    let alpha = raw.min(ALPHA_MAX);
    if alpha < OPACITY_THRESHOLD {
        return None;
    }
    Some((alpha, weight, raw > ALPHA_MAX))
}

/// Front-to-back blend of one pixel over an already depth-sorted list.
#[inline]
fn blend_pixel(
    prepared: &[Prepared],
    order: impl Iterator<Item = usize>,
    px: f64,
    py: f64,
    background: &Vector3<f64>,
) -> (Vector3<f64>, usize) {
    let mut t = 1.0;
    let mut c = Vector3::zeros();
    let mut blends = 0;
    for i in order {
        let p = &prepared[i];
        if let Some((alpha, _, _)) = alpha_at(p, px, py) {
            c += p.color * (alpha * t);
            t *= 1.0 - alpha;
            blends += 1;
            if t < TRANSMITTANCE_MIN {
                break;
            }
        }
    }
    (c + background * t, blends)
}

fn depth_order(splats: &[Splat2D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then(splats[a].source_index.cmp(&splats[b].source_index))
    });
    order
}

fn prepare_all(splats: &[Splat2D], cam: &Camera) -> Result<Vec<Prepared>> {
    for (i, s) in splats.iter().enumerate() {
        check_finite(s, i)?;
    }
    splats.iter().map(|s| prepare(s, cam)).collect()
}

struct TileGrid {
    tiles_x: u32,
    tiles_y: u32,
    /// Per tile, splat indices in blending order.
    lists: Vec<Vec<u32>>,
}

impl TileGrid {
    fn build(prepared: &[Prepared], order: &[usize], cam: &Camera) -> Self {
        let tiles_x = cam.width.div_ceil(TILE_SIZE);
        let tiles_y = cam.height.div_ceil(TILE_SIZE);
        let mut lists = vec![Vec::new(); (tiles_x * tiles_y) as usize];
        // appending in global depth order leaves every tile list sorted
        for &i in order {
            let Some([x0, y0, x1, y1]) = prepared[i].rect else {
                continue;
            };
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    lists[(ty * tiles_x + tx) as usize].push(i as u32);
                }
            }
        }
        TileGrid {
            tiles_x,
            tiles_y,
            lists,
        }
    }

    fn pixel_rect(&self, tile: usize, cam: &Camera) -> (u32, u32, u32, u32) {
        let tx = tile as u32 % self.tiles_x;
        let ty = tile as u32 / self.tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (x0, y0, (x0 + TILE_SIZE).min(cam.width), (y0 + TILE_SIZE).min(cam.height))
    }

    fn len(&self) -> usize {
        (self.tiles_x * self.tiles_y) as usize
    }
}

/// Renders splats with per-tile work lists. Tiles are processed in
/// parallel; each writes a disjoint pixel block, so the result does not
/// depend on scheduling.
pub fn rasterize(
    splats: &[Splat2D],
    cam: &Camera,
    background: &Vector3<f64>,
) -> Result<(Image, RenderStats)> {
    let prepared = prepare_all(splats, cam)?;
    let order = depth_order(splats);
    let grid = TileGrid::build(&prepared, &order, cam);

    let blocks: Vec<Vec<(Vector3<f64>, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = grid.pixel_rect(tile, cam);
            let list = &grid.lists[tile];
            let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
            for y in y0..y1 {
                for x in x0..x1 {
                    out.push(blend_pixel(
                        &prepared,
                        list.iter().map(|&i| i as usize),
                        f64::from(x) + 0.5,
                        f64::from(y) + 0.5,
                        background,
                    ));
                }
            }
            out
        })
        .collect();

    let mut image = Image::new(cam.width, cam.height, *background);
    let mut blends = vec![0usize; cam.pixel_count()];
    for (tile, block) in blocks.iter().enumerate() {
        let (x0, y0, x1, _) = grid.pixel_rect(tile, cam);
        let w = (x1 - x0) as usize;
        for (k, (c, n)) in block.iter().enumerate() {
            let x = x0 + (k % w) as u32;
            let y = y0 + (k / w) as u32;
            image.set(x, y, *c);
            blends[(y * cam.width + x) as usize] = *n;
        }
    }
    let mut stats = RenderStats {
        num_splatted: splats.len(),
        num_selected: splats.len(),
        ..Default::default()
    };
    for n in blends {
        stats.record_pixel(n);
    }
    Ok((image, stats))
}

/// Reference renderer: global depth sort, every splat tested at every pixel.
pub fn rasterize_naive(splats: &[Splat2D], cam: &Camera, background: &Vector3<f64>) -> Result<Image> {
    let mut prepared = prepare_all(splats, cam)?;
    // no tile culling here: every splat is offered to every pixel
    for p in &mut prepared {
        if p.rect.is_some() {
            p.rect = Some([0, 0, cam.width - 1, cam.height - 1]);
        }
    }
    let order = depth_order(splats);
    Ok(Image::from_fn(cam.width, cam.height, |x, y| {
        blend_pixel(
            &prepared,
            order.iter().copied(),
            f64::from(x) + 0.5,
            f64::from(y) + 0.5,
            background,
        )
        .0
    }))
}

#[derive(Clone, Copy)]
struct Contribution {
    local: usize,
    alpha: f64,
    weight: f64,
    clamped: bool,
    t: f64,
}

#[derive(Clone, Copy, Default)]
struct RawGrad {
    color: Vector3<f64>,
    opacity: f64,
    mean: Vector2<f64>,
    conic: Vector3<f64>,
}

/// Analytic gradients of `sum_pixels <image_grad, C>` with respect to each
/// splat's color, opacity, mean and (dilated) covariance. The forward pass
/// is recomputed per pixel; tile partial sums are combined in tile order.
pub fn rasterize_backward(
    splats: &[Splat2D],
    cam: &Camera,
    background: &Vector3<f64>,
    image_grad: &Image,
) -> Result<Vec<SplatGrad>> {
    if image_grad.width != cam.width || image_grad.height != cam.height {
        return Err(Error::Dimensions(format!(
            "image gradient {}x{} for a {}x{} camera",
            image_grad.width, image_grad.height, cam.width, cam.height
        )));
    }
    let prepared = prepare_all(splats, cam)?;
    let order = depth_order(splats);
    let grid = TileGrid::build(&prepared, &order, cam);

    let partials: Vec<Vec<RawGrad>> = (0..grid.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = grid.pixel_rect(tile, cam);
            let list = &grid.lists[tile];
            let mut acc = vec![RawGrad::default(); list.len()];
            let mut contribs: Vec<Contribution> = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let g = image_grad.get(x, y);
                    if g == Vector3::zeros() {
                        continue;
                    }
                    let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                    contribs.clear();
                    let mut t = 1.0;
                    for (local, &i) in list.iter().enumerate() {
                        if let Some((alpha, weight, clamped)) = alpha_at(&prepared[i as usize], px, py) {
                            contribs.push(Contribution {
                                local,
                                alpha,
                                weight,
                                clamped,
                                t,
                            });
                            t *= 1.0 - alpha;
                            if t < TRANSMITTANCE_MIN {
                                break;
                            }
                        }
                    }
                    let mut behind = *background;
                    for c in contribs.iter().rev() {
                        let p = &prepared[list[c.local] as usize];
                        let a = &mut acc[c.local];
                        a.color += g * (c.alpha * c.t);
                        let d_alpha = c.t * g.dot(&(p.color - behind));
                        behind = p.color * c.alpha + behind * (1.0 - c.alpha);
                        if c.clamped {
                            continue;
                        }
                        a.opacity += d_alpha * c.weight;
                        let d_power = d_alpha * p.opacity * c.weight;
                        let dx = px - p.mean.x;
                        let dy = py - p.mean.y;
                        // d power / d mean = conic * (pixel - mean)
                        a.mean += d_power
                            * Vector2::new(p.conic.x * dx + p.conic.y * dy, p.conic.y * dx + p.conic.z * dy);
                        a.conic += d_power * Vector3::new(-0.5 * dx * dx, -dx * dy, -0.5 * dy * dy);
                    }
                }
            }
            acc
        })
        .collect();

    let mut raw = vec![RawGrad::default(); splats.len()];
    for (tile, acc) in partials.iter().enumerate() {
        for (local, g) in acc.iter().enumerate() {
            let r = &mut raw[grid.lists[tile][local] as usize];
            r.color += g.color;
            r.opacity += g.opacity;
            r.mean += g.mean;
            r.conic += g.conic;
        }
    }

    Ok(raw
        .iter()
        .zip(&prepared)
        .map(|(r, p)| {
            let q = Matrix2::new(p.conic.x, p.conic.y, p.conic.y, p.conic.z);
            let gq = Matrix2::new(r.conic.x, 0.5 * r.conic.y, 0.5 * r.conic.y, r.conic.z);
            let gv = -(q * gq * q);
            SplatGrad {
                color: r.color,
                opacity: r.opacity,
                mean2d: r.mean,
                cov2d: Vector3::new(gv[(0, 0)], gv[(0, 1)] + gv[(1, 0)], gv[(1, 1)]),
            }
        })
        .collect())
}

//! Quality and speed of every render mode at every downsample scale.

use serde::Serialize;

use super::metrics::{psnr, ssim};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{render, RenderMode, RenderSettings};
use crate::scene::Scene;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub scales: Vec<u32>,
    pub modes: Vec<RenderMode>,
    /// Timed repetitions per cell; the median is reported.
    pub repetitions: usize,
    pub render: RenderSettings,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scales: vec![1, 2, 4, 8, 16, 32, 64, 128],
            modes: vec![RenderMode::SingleScale, RenderMode::MultiScale],
            repetitions: 5,
            render: RenderSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub scale: u32,
    pub mode: RenderMode,
    /// Averages over cameras.
    pub psnr: f64,
    pub ssim: f64,
    /// Median over repetitions of the mean per-image render time.
    pub ms_per_image: f64,
    pub selected: f64,
    pub splatted: f64,
    pub blends_per_pixel: f64,
}

impl BenchRow {
    /// The row without its timing, for reproducibility comparisons.
    pub fn untimed(&self) -> BenchRow {
        BenchRow {
            ms_per_image: 0.0,
            ..self.clone()
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Renders every camera in every (scale, mode) cell and scores it against
/// `truth` (full resolution, one per camera) area-averaged to the scale.
/// Cells run one after another so timings do not interfere.
pub fn bench(scene: &Scene, cameras: &[Camera], truth: &[Image], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cameras.len() != truth.len() || cameras.is_empty() {
        return Err(Error::invalid("bench", format!("{} cameras for {} images", cameras.len(), truth.len())));
    }
    let reps = cfg.repetitions.max(1);
    let mut rows = Vec::new();
    for &scale in &cfg.scales {
        let targets: Vec<Image> = truth.iter().map(|t| t.downsample(scale)).collect::<Result<_>>()?;
        for &mode in &cfg.modes {
            let mut times = Vec::with_capacity(reps);
            let mut quality = None;
            for _ in 0..reps {
                let mut total = 0.0;
                let mut acc = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (cam, target) in cameras.iter().zip(&targets) {
                    let r = render(scene, cam, scale, mode, &cfg.render)?;
                    total += r.stats.wall_time;
                    if quality.is_none() {
                        acc.0 += psnr(&r.image, target)?;
                        acc.1 += ssim(&r.image, target)?;
                        acc.2 += r.stats.num_selected as f64;
                        acc.3 += r.stats.num_splatted as f64;
                        acc.4 += r.stats.mean_blends();
                    }
                }
                times.push(total / cameras.len() as f64 * 1e3);
                quality.get_or_insert(acc);
            }
            let q = quality.expect("at least one repetition");
            let n = cameras.len() as f64;
            rows.push(BenchRow {
                scale,
                mode,
                psnr: q.0 / n,
                ssim: q.1 / n,
                ms_per_image: median(times),
                selected: q.2 / n,
                splatted: q.3 / n,
                blends_per_pixel: q.4 / n,
            });
        }
    }
    Ok(rows)
}

/// Tab-separated table. SSIM occupies the column where a perceptual
/// metric would usually go.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("scale\tmode\tPSNR\tSSIM\tms/image\tselected\tsplatted\tblends/px\n");
    for r in rows {
        s.push_str(&format!(
            "{}x\t{}\t{:.2}\t{:.4}\t{:.3}\t{:.1}\t{:.1}\t{:.2}\n",
            r.scale,
            r.mode.name(),
            r.psnr,
            r.ssim,
            r.ms_per_image,
            r.selected,
            r.splatted,
            r.blends_per_pixel
        ));
    }
    s
}

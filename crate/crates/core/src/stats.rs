/// Counters for one render pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderStats {
    /// Seconds spent projecting, selecting and rasterizing.
    pub wall_time: f64,
    /// Gaussians that survived projection culling.
    pub num_splatted: usize,
    /// Splats handed to the rasterizer.
    pub num_selected: usize,
    /// `blends_per_pixel[k]` is the number of pixels that blended exactly `k` splats.
    pub blends_per_pixel: Vec<u64>,
}

impl RenderStats {
    pub fn record_pixel(&mut self, blends: usize) {
        if self.blends_per_pixel.len() <= blends {
            self.blends_per_pixel.resize(blends + 1, 0);
        }
        self.blends_per_pixel[blends] += 1;
    }

    pub fn total_blends(&self) -> u64 {
        self.blends_per_pixel
            .iter()
            .enumerate()
            .map(|(k, n)| k as u64 * n)
            .sum()
    }

    pub fn pixels(&self) -> u64 {
        self.blends_per_pixel.iter().sum()
    }

    pub fn mean_blends(&self) -> f64 {
        let px = self.pixels();
        if px == 0 {
            0.0
        } else {
            self.total_blends() as f64 / px as f64
        }
    }
}

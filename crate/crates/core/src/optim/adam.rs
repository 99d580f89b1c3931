//! Adam with per-group learning rates over Gaussian parameters.
//!
//! Each Gaussian's parameters are laid out as position (3), rotation
//! `(w, x, y, z)` (4), log-scale (3), opacity logit (1), then the SH
//! coefficients channel-interleaved.

use crate::gaussian::{Gaussian3D, GaussianGrad};

const POSITION: usize = 0;
const ROTATION: usize = 3;
const SCALE: usize = 7;
const OPACITY: usize = 10;
const SH: usize = 11;

pub fn param_len(sh_len: usize) -> usize {
    SH + 3 * sh_len
}

pub fn read_params(g: &Gaussian3D) -> Vec<f64> {
    let mut p = Vec::with_capacity(param_len(g.sh.len()));
    p.extend(g.position.iter());
    p.extend([g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k]);
    p.extend(g.log_scale.iter());
    p.push(g.opacity_logit);
    for c in &g.sh {
        p.extend(c.iter());
    }
    p
}

pub fn write_params(g: &mut Gaussian3D, p: &[f64]) {
    g.position.copy_from_slice(&p[POSITION..ROTATION]);
    g.rotation.w = p[ROTATION];
    g.rotation.i = p[ROTATION + 1];
    g.rotation.j = p[ROTATION + 2];
    g.rotation.k = p[ROTATION + 3];
    g.log_scale.copy_from_slice(&p[SCALE..OPACITY]);
    g.opacity_logit = p[OPACITY];
    for (k, c) in g.sh.iter_mut().enumerate() {
        c.copy_from_slice(&p[SH + 3 * k..SH + 3 * k + 3]);
    }
}

pub fn flatten_grad(g: &GaussianGrad) -> Vec<f64> {
    let mut p = Vec::with_capacity(param_len(g.sh.len()));
    p.extend(g.position.iter());
    p.extend([g.rotation.w, g.rotation.i, g.rotation.j, g.rotation.k]);
    p.extend(g.log_scale.iter());
    p.push(g.opacity_logit);
    for c in &g.sh {
        p.extend(c.iter());
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    /// Position rate at the first iteration, multiplied by the scene bound.
    pub position_init: f64,
    /// Position rate at the last iteration, multiplied by the scene bound.
    pub position_final: f64,
    pub sh_dc: f64,
    /// Higher-order SH coefficients use `sh_dc / sh_rest_divisor`.
    pub sh_rest_divisor: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            sh_dc: 2.5e-3,
            sh_rest_divisor: 20.0,
            opacity: 0.05,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Log-linear position decay over `total` iterations.
    pub fn position_at(&self, iteration: usize, total: usize, bound: f64) -> f64 {
        let t = if total == 0 { 0.0 } else { (iteration as f64 / total as f64).min(1.0) };
        if self.position_init <= 0.0 || self.position_final <= 0.0 {
            return self.position_init.max(0.0) * bound;
        }
        (self.position_init.ln() * (1.0 - t) + self.position_final.ln() * t).exp() * bound
    }

    fn per_param(&self, position_lr: f64, sh_len: usize) -> Vec<f64> {
        let mut lr = vec![position_lr; 3];
        lr.extend([self.rotation; 4]);
        lr.extend([self.scale; 3]);
        lr.push(self.opacity);
        lr.extend([self.sh_dc; 3]);
        lr.extend(std::iter::repeat_n(self.sh_dc / self.sh_rest_divisor, 3 * sh_len.saturating_sub(1)));
        lr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(count: usize, sh_len: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            step: 0,
            m: vec![vec![0.0; param_len(sh_len)]; count],
            v: vec![vec![0.0; param_len(sh_len)]; count],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Rebuilds the state after the scene changed: `origin[i]` is the old
    /// index of new Gaussian `i`, or `None` for a fresh one.
    pub fn remap(&mut self, origin: &[Option<usize>], sh_len: usize) {
        let zero = vec![0.0; param_len(sh_len)];
        let pick = |state: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            origin
                .iter()
                .map(|o| o.map_or_else(|| zero.clone(), |i| state[i].clone()))
                .collect()
        };
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }

    /// One update of every Gaussian; `grads[i] = None` counts as a zero gradient.
    pub fn step(&mut self, gaussians: &mut [Gaussian3D], grads: &[Option<GaussianGrad>], lr: &LearningRates, position_lr: f64) {
        assert_eq!(gaussians.len(), self.m.len(), "optimizer state out of sync with the scene");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let Some(first) = gaussians.first() else { return };
        let rates = lr.per_param(position_lr, first.sh.len());
        for (i, g) in gaussians.iter_mut().enumerate() {
            let grad = grads[i].as_ref().map(flatten_grad);
            let mut p = read_params(g);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                let gk = grad.as_ref().map_or(0.0, |g| g[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                p[k] -= rates[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
            }
            write_params(g, &p);
            g.normalize_rotation();
            g.opacity_logit = g.opacity_logit.clamp(-30.0, 30.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Quaternion, Vector3};

    #[test]
    fn params_round_trip() {
        let g = Gaussian3D::new(
            Vector3::new(1.0, 2.0, 3.0),
            Quaternion::new(0.5, 0.5, 0.5, 0.5),
            Vector3::new(0.1, 0.2, 0.3),
            0.4,
            vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-0.1, 0.0, 0.5), Vector3::zeros(), Vector3::repeat(1.0)],
        );
        let mut h = g.clone();
        h.position = Vector3::zeros();
        h.sh[2] = Vector3::repeat(9.0);
        write_params(&mut h, &read_params(&g));
        assert_eq!(h, g);
    }

    #[test]
    fn position_rate_decays_log_linearly() {
        let lr = LearningRates::default();
        assert!((lr.position_at(0, 100, 2.0) - 3.2e-4).abs() < 1e-15);
        assert!((lr.position_at(100, 100, 2.0) - 3.2e-6).abs() < 1e-15);
        assert!((lr.position_at(50, 100, 1.0) - 1.6e-5).abs() < 1e-15);
    }
}

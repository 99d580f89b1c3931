//! Flat `key = value` configuration shared by every command.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mssplat::eval::BenchConfig;
use mssplat::io::SynthParams;
use mssplat::optim::TrainConfig;
use mssplat::render::RenderMode;

/// Every tunable the commands read. Defaults are the library defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub synth: SynthParams,
    /// Strength of the perturbation applied to the synthetic fit start.
    pub perturb: f64,
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().ok().with_context(|| format!("{key}: bad list entry {s:?}")))
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().ok().with_context(|| format!("{key}: cannot parse {v:?}"))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_mode(v: &str) -> Result<RenderMode> {
    match v {
        "single_scale" => Ok(RenderMode::SingleScale),
        "multi_scale" => Ok(RenderMode::MultiScale),
        "ablation" => Ok(RenderMode::Ablation),
        _ => bail!("unknown render mode {v:?} (single_scale, multi_scale, ablation)"),
    }
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            synth: SynthParams::default(),
            perturb: 1.0,
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let r = &mut t.render;
        match key {
            "seed" => {
                let seed = parse(key, v)?;
                self.set_seed(seed);
                return Ok(());
            }
            "iterations" => t.iterations = parse(key, v)?,
            "warmup_iters" => t.warmup_iters = parse(key, v)?,
            "loss_lambda" => t.loss_lambda = parse(key, v)?,
            "densify_interval" => t.densify_interval = parse(key, v)?,
            "densify_from" => t.densify_from = parse(key, v)?,
            "densify_until" => t.densify_until = parse(key, v)?,
            "grad_threshold" => t.densify.grad_threshold = parse(key, v)?,
            "percent_dense" => t.densify.percent_dense = parse(key, v)?,
            "prune_opacity" => t.densify.prune_opacity = parse(key, v)?,
            "train_scales" => t.scales = parse_list(key, v)?,
            "build_lod" => t.build_lod = parse(key, v)?,
            "lr_position_init" => t.lr.position_init = parse(key, v)?,
            "lr_position_final" => t.lr.position_final = parse(key, v)?,
            "lr_sh_dc" => t.lr.sh_dc = parse(key, v)?,
            "lr_sh_rest_divisor" => t.lr.sh_rest_divisor = parse(key, v)?,
            "lr_opacity" => t.lr.opacity = parse(key, v)?,
            "lr_scale" => t.lr.scale = parse(key, v)?,
            "lr_rotation" => t.lr.rotation = parse(key, v)?,
            "dilation" => r.lowpass.dilation = parse(key, v)?,
            "coverage_on_dilated" => r.lowpass.coverage_on_dilated = parse(key, v)?,
            "s_t" => r.select.s_t = parse(key, v)?,
            "s_rel_max" => r.select.s_rel_max = parse(key, v)?,
            "s_rel_min" => r.select.s_rel_min = parse(key, v)?,
            "lambda1" => r.select.lambda1 = parse(key, v)?,
            "lambda2" => r.select.lambda2 = parse(key, v)?,
            "background" => {
                let c: Vec<f64> = parse_list(key, v)?;
                if c.len() != 3 {
                    bail!("background: expected three comma-separated values");
                }
                r.background = nalgebra::Vector3::new(c[0], c[1], c[2]);
            }
            "bench_scales" => self.bench.scales = parse_list(key, v)?,
            "bench_modes" => {
                self.bench.modes = v.split(',').map(|m| parse_mode(m.trim())).collect::<Result<_>>()?;
            }
            "repetitions" => self.bench.repetitions = parse(key, v)?,
            "synth_cells" => self.synth.cells = parse(key, v)?,
            "synth_count" => self.synth.count = parse(key, v)?,
            "synth_cameras" => self.synth.cameras = parse(key, v)?,
            "sh_degree" => self.synth.sh_degree = parse(key, v)?,
            "perturb" => self.perturb = parse(key, v)?,
            _ => bail!("unknown config key {key:?}"),
        }
        self.bench.render = self.train.render;
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("config line {}: expected key = value", n + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("config line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    /// The effective configuration in the same format the parser reads.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let r = &t.render;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("seed", t.seed.to_string());
        kv("iterations", t.iterations.to_string());
        kv("warmup_iters", t.warmup_iters.to_string());
        kv("loss_lambda", t.loss_lambda.to_string());
        kv("densify_interval", t.densify_interval.to_string());
        kv("densify_from", t.densify_from.to_string());
        kv("densify_until", t.densify_until.to_string());
        kv("grad_threshold", t.densify.grad_threshold.to_string());
        kv("percent_dense", t.densify.percent_dense.to_string());
        kv("prune_opacity", t.densify.prune_opacity.to_string());
        kv("train_scales", join(&t.scales));
        kv("build_lod", t.build_lod.to_string());
        kv("lr_position_init", t.lr.position_init.to_string());
        kv("lr_position_final", t.lr.position_final.to_string());
        kv("lr_sh_dc", t.lr.sh_dc.to_string());
        kv("lr_sh_rest_divisor", t.lr.sh_rest_divisor.to_string());
        kv("lr_opacity", t.lr.opacity.to_string());
        kv("lr_scale", t.lr.scale.to_string());
        kv("lr_rotation", t.lr.rotation.to_string());
        kv("dilation", r.lowpass.dilation.to_string());
        kv("coverage_on_dilated", r.lowpass.coverage_on_dilated.to_string());
        kv("s_t", r.select.s_t.to_string());
        kv("s_rel_max", r.select.s_rel_max.to_string());
        kv("s_rel_min", r.select.s_rel_min.to_string());
        kv("lambda1", r.select.lambda1.to_string());
        kv("lambda2", r.select.lambda2.to_string());
        kv("background", join(r.background.as_slice()));
        kv("bench_scales", join(&self.bench.scales));
        kv("bench_modes", self.bench.modes.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        kv("repetitions", self.bench.repetitions.to_string());
        kv("synth_cells", self.synth.cells.to_string());
        kv("synth_count", self.synth.count.to_string());
        kv("synth_cameras", self.synth.cameras.to_string());
        kv("sh_degree", self.synth.sh_degree.to_string());
        kv("perturb", self.perturb.to_string());
        s
    }
}

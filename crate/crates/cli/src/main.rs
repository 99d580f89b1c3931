#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mssplat::eval::{bench, bench::format_table, psnr, ssim};
use mssplat::io::{self, SynthKind};
use mssplat::lod::build_multiscale;
use mssplat::optim::gradcheck::{grad_check, grad_check_problem};
use mssplat::optim::{train, Dataset};
use mssplat::render::{render, RenderMode};
use mssplat::select::warm_up_ranges;
use mssplat::{Camera, Image};

use config::Settings;

/// Multi-scale Gaussian splatting: synthesize, fit, build levels of detail,
/// render and benchmark.
#[derive(Parser, Debug)]
#[command(name = "mssplat", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: the THREADS variable, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file overriding defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Do not print the effective configuration.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene, its cameras, ground-truth images and a perturbed fit start.
    Synth {
        /// checker_wall, random_cloud or near_far.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a scene to images.
    Fit {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Directory of `<camera id>.png` images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration log, one JSON object per line.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Insert coarse levels into an existing scene and initialize coverage ranges.
    BuildLod {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one camera at a downsample scale.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Camera id.
        #[arg(long, default_value_t = 0)]
        camera: u32,
        #[arg(long, default_value_t = 1)]
        scale: u32,
        /// Render every level-1 Gaussian without the coverage filter.
        #[arg(long, conflicts_with = "ablation")]
        no_select: bool,
        /// Filter level-1 Gaussians without the inserted coarse levels.
        #[arg(long)]
        ablation: bool,
        /// Output image (.png or .ppm).
        #[arg(long)]
        out: PathBuf,
    },
    /// Quality and speed of each render mode at each scale.
    Bench {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Directory of full-resolution `<camera id>.png` images.
        #[arg(long)]
        images: PathBuf,
        /// JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR and SSIM between two images or two directories of same-named images.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Area-downsample the reference by this factor first.
        #[arg(long, default_value_t = 1)]
        scale: u32,
    },
    /// Compare analytic gradients with central finite differences.
    GradCheck {
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        sh_degree: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
}

fn image_path(dir: &Path, cam: &Camera) -> PathBuf {
    dir.join(format!("{:04}.png", cam.id))
}

fn read_images(dir: &Path, cams: &[Camera]) -> Result<Vec<Image>> {
    cams.iter()
        .map(|c| {
            let p = image_path(dir, c);
            io::read_image(&p).with_context(|| format!("reading {}", p.display()))
        })
        .collect()
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn run(cli: Cli, cfg: Settings) -> Result<()> {
    match cli.command {
        Command::Synth { kind, out } => {
            let kind: SynthKind = kind.parse()?;
            let s = io::synth_scene(kind, &cfg.synth, &cfg.train.render)?;
            fs::create_dir_all(out.join("images"))?;
            io::write_ply(&s.scene, &out.join("scene.ply"))?;
            let init = io::synth::perturb(&s.scene, cfg.synth.seed, cfg.perturb);
            io::write_ply(&init, &out.join("init.ply"))?;
            io::write_cameras(&s.cameras, &out.join("cameras.txt"))?;
            for (c, img) in s.cameras.iter().zip(&s.truth) {
                io::write_image(img, &image_path(&out.join("images"), c))?;
            }
            print_json(&serde_json::json!({
                "gaussians": s.scene.len(),
                "cameras": s.cameras.len(),
                "width": s.cameras[0].width,
                "height": s.cameras[0].height,
            }))
        }
        Command::Fit {
            scene,
            cameras,
            images,
            out,
            log,
        } => {
            let mut scene = io::read_ply(&scene)?;
            let cams = io::read_cameras(&cameras)?;
            let imgs = read_images(&images, &cams)?;
            let data = Dataset::from_full_res(cams, imgs, &cfg.train.scales)?;
            let mut sink: Option<std::io::BufWriter<fs::File>> =
                log.map(|p| fs::File::create(p).map(std::io::BufWriter::new)).transpose()?;
            let mut failure = None;
            let summary = train(&mut scene, &data, &cfg.train, |rec| {
                if let Some(w) = sink.as_mut() {
                    if let Err(e) = serde_json::to_writer(&mut *w, rec).map_err(anyhow::Error::from).and_then(|_| {
                        w.write_all(b"\n")?;
                        Ok(())
                    }) {
                        failure.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e.context("writing training log"));
            }
            if let Some(mut w) = sink {
                w.flush()?;
            }
            io::write_ply(&scene, &out)?;
            eprintln!(
                "inserted {} coarse Gaussians {:?}; {:.2}% of {}",
                summary.inserted_total,
                summary.inserted_per_level,
                100.0 * summary.inserted_total as f64 / summary.final_count.max(1) as f64,
                summary.final_count
            );
            print_json(&summary)
        }
        Command::BuildLod { scene, cameras, out } => {
            let mut s = io::read_ply(&scene)?;
            let cams = io::read_cameras(&cameras)?;
            let r = &cfg.train.render;
            let inserted = build_multiscale(&mut s, &cams, r.select.s_t, &r.lowpass)?;
            s.train_scale_min = *cfg.train.scales.iter().min().context("empty train_scales")?;
            s.train_scale_max = *cfg.train.scales.iter().max().context("empty train_scales")?;
            warm_up_ranges(&mut s, &cams, &cfg.train.scales, &r.select, &r.lowpass)?;
            io::write_ply(&s, &out)?;
            let total: usize = inserted.iter().sum();
            print_json(&serde_json::json!({
                "inserted_per_level": inserted,
                "inserted_total": total,
                "final_count": s.len(),
            }))
        }
        Command::Render {
            scene,
            cameras,
            camera,
            scale,
            no_select,
            ablation,
            out,
        } => {
            let s = io::read_ply(&scene)?;
            let cams = io::read_cameras(&cameras)?;
            let cam = cams
                .iter()
                .find(|c| c.id == camera)
                .with_context(|| format!("no camera with id {camera}"))?;
            let mode = if no_select {
                RenderMode::SingleScale
            } else if ablation {
                RenderMode::Ablation
            } else {
                RenderMode::MultiScale
            };
            let r = render(&s, cam, scale, mode, &cfg.train.render)?;
            io::write_image(&r.image, &out)?;
            print_json(&serde_json::json!({
                "mode": mode,
                "width": r.image.width,
                "height": r.image.height,
                "ms": r.stats.wall_time * 1e3,
                "splatted": r.stats.num_splatted,
                "selected": r.stats.num_selected,
                "blends_per_pixel": r.stats.mean_blends(),
            }))
        }
        Command::Bench {
            scene,
            cameras,
            images,
            out,
        } => {
            let s = io::read_ply(&scene)?;
            let cams = io::read_cameras(&cameras)?;
            let imgs = read_images(&images, &cams)?;
            let rows = bench(&s, &cams, &imgs, &cfg.bench)?;
            print!("{}", format_table(&rows));
            if let Some(p) = out {
                fs::write(&p, serde_json::to_string_pretty(&rows)?)?;
            }
            Ok(())
        }
        Command::Eval { reference, test, scale } => {
            let pairs: Vec<(String, PathBuf, PathBuf)> = if reference.is_dir() {
                let mut names: Vec<String> = fs::read_dir(&reference)?
                    .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
                    .collect::<std::io::Result<_>>()?;
                names.sort();
                names
                    .into_iter()
                    .filter(|n| n.ends_with(".png") || n.ends_with(".ppm"))
                    .map(|n| (n.clone(), reference.join(&n), test.join(&n)))
                    .collect()
            } else {
                vec![(reference.display().to_string(), reference.clone(), test.clone())]
            };
            if pairs.is_empty() {
                bail!("no images in {}", reference.display());
            }
            let mut sum = (0.0, 0.0);
            for (name, a, b) in &pairs {
                let a = io::read_image(a)?.downsample(scale)?;
                let b = io::read_image(b)?;
                let (p, q) = (psnr(&b, &a)?, ssim(&b, &a)?);
                sum.0 += p;
                sum.1 += q;
                print_json(&serde_json::json!({"image": name, "psnr": p, "ssim": q}))?;
            }
            let n = pairs.len() as f64;
            print_json(&serde_json::json!({"image": "mean", "psnr": sum.0 / n, "ssim": sum.1 / n}))
        }
        Command::GradCheck {
            count,
            sh_degree,
            step,
            tolerance,
        } => {
            let (scene, cam, truth) = grad_check_problem(cfg.train.seed, count, sh_degree)?;
            let report = grad_check(&scene, &cam, &truth, &cfg.train.render, cfg.train.loss_lambda, step, 1e-6)?;
            for e in &report.entries {
                print_json(e)?;
            }
            println!("max relative error {:.3e} (tolerance {tolerance:.1e})", report.max_rel_error);
            if !(report.max_rel_error < tolerance) {
                bail!("gradient check failed");
            }
            Ok(())
        }
    }
}

/// Exit codes by error category; 2 is reserved for usage errors.
fn exit_code(e: &anyhow::Error) -> u8 {
    use mssplat::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::Config(_) | E::Invalid { .. }) => 3,
        Some(E::Io(_) | E::Ply { .. } | E::CameraParse { .. } | E::ImageFormat { .. } | E::Png(_) | E::Json(_)) => 4,
        Some(E::NonFinite(_) | E::Dimensions(_)) => 5,
        None if e.chain().any(|c| c.is::<std::io::Error>()) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = || -> Result<Settings> {
        let mut cfg = Settings::default();
        if let Some(p) = &cli.global.config {
            cfg.apply_file(p)?;
        }
        if let Some(seed) = cli.global.seed {
            cfg.set_seed(seed);
        }
        let threads = match cli.global.threads {
            Some(n) => Some(n),
            None => std::env::var("THREADS").ok().map(|v| v.parse().context("THREADS")).transpose()?,
        };
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        Ok(cfg)
    };
    let cfg = match setup() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(3);
        }
    };
    if !cli.global.quiet {
        eprint!("# effective config\nthreads = {}\n{}", rayon::current_num_threads(), cfg.echo());
    }
    let result = run(cli, cfg);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynamap_core::dataset::{read_ply_points, read_trajectory};
use dynamap_core::eval::{ate, cloud_compare, DEFAULT_INLIER_THRESHOLD};
use dynamap_core::pipeline::{run_pipeline, DebugDumps, PipelineConfig};
use dynamap_core::synthetic::{generate_synthetic, SceneSpec, PRESETS};

#[derive(Parser)]
#[command(name = "dynamap", version, about = "Dynamic RGB-D surfel SLAM with instance-level object maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a TUM-layout sequence and write trajectories, maps and timings.
    Run(RunArgs),
    /// Absolute trajectory error of an estimate against ground truth.
    EvalAte {
        estimated: PathBuf,
        ground_truth: PathBuf,
        /// Maximum timestamp difference for associating poses, in seconds.
        #[arg(long, default_value_t = 0.02)]
        max_gap: f64,
        /// Compare in the given frames instead of aligning first.
        #[arg(long)]
        no_align: bool,
    },
    /// Accuracy and completeness of a reconstructed point cloud.
    EvalCloud {
        reconstructed: PathBuf,
        ground_truth: PathBuf,
        /// Inlier distance in meters.
        #[arg(long, default_value_t = DEFAULT_INLIER_THRESHOLD)]
        threshold: f64,
        /// Register the reconstruction onto the ground truth with ICP first.
        #[arg(long)]
        align: bool,
    },
    /// Render a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Run the pipeline and write per-frame label, instance, residual and motion images.
    DumpMasks(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`[section]` headers, `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence directory with rgb.txt and depth.txt.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory of per-frame `.det` files.
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set tracking.lambda_rgb=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scene.
    #[arg(long, conflicts_with = "scene")]
    preset: Option<String>,
    /// Scene description in JSON.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Depth noise standard deviation at 1 m.
    #[arg(long)]
    noise: Option<f64>,
    /// Write `.det` files for the moving bodies.
    #[arg(long, conflicts_with = "no_detections")]
    detections: bool,
    #[arg(long)]
    no_detections: bool,
}

fn build_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(d) = &args.detections {
        cfg.detections = Some(d.clone());
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    cfg.apply_overrides(&args.overrides)?;
    Ok(cfg)
}

fn run(cfg: &PipelineConfig) -> Result<()> {
    let out = run_pipeline(cfg).with_context(|| format!("processing {}", cfg.dataset.display()))?;
    let objects = out.maps.iter().filter(|m| !m.is_static()).count();
    println!("frames {}", out.frames.len());
    println!("object_maps {objects}");
    println!("tracking_failures {}", out.tracking_failures);
    match &cfg.output {
        Some(dir) => println!("output {}", dir.display()),
        None => log::warn!("no output directory configured; results were not written"),
    }
    Ok(())
}

fn eval_ate(est: &Path, gt: &Path, max_gap: f64, align: bool) -> Result<()> {
    let e = read_trajectory(est)?;
    let g = read_trajectory(gt)?;
    let r = ate(&e, &g, max_gap, align)?;
    println!("rmse {:.6}", r.rmse);
    println!("mean {:.6}", r.mean);
    println!("median {:.6}", r.median);
    println!("max {:.6}", r.max);
    println!("pairs {}", r.pairs_used);
    Ok(())
}

fn eval_cloud(rec: &Path, gt: &Path, threshold: f64, align: bool) -> Result<()> {
    let r = cloud_compare(&read_ply_points(rec)?, &read_ply_points(gt)?, threshold, align)?;
    println!("accuracy {:.6}", r.accuracy);
    println!("completeness {:.6}", r.completeness);
    println!("threshold {:.6}", r.threshold);
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let frames = args.frames.unwrap_or(100);
    let mut spec = match (&args.preset, &args.scene) {
        (_, Some(path)) => SceneSpec::load(path)?,
        (Some(name), None) => SceneSpec::preset(name, frames)?,
        (None, None) => bail!("one of --preset ({}) or --scene is required", PRESETS.join(", ")),
    };
    if let Some(n) = args.frames {
        spec.frames = n;
    }
    if let Some(sigma) = args.noise {
        spec.noise_sigma = sigma;
    }
    if args.detections {
        spec.write_detections = true;
    } else if args.no_detections {
        spec.write_detections = false;
    }
    let summary = generate_synthetic(&spec, &args.out)?;
    println!("frames {}", summary.timestamps.len());
    println!("output {}", args.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(&build_config(&args)?),
        Command::EvalAte { estimated, ground_truth, max_gap, no_align } => {
            eval_ate(&estimated, &ground_truth, max_gap, !no_align)
        }
        Command::EvalCloud { reconstructed, ground_truth, threshold, align } => {
            eval_cloud(&reconstructed, &ground_truth, threshold, align)
        }
        Command::Synth(args) => synth(&args),
        Command::DumpMasks(args) => {
            let mut cfg = build_config(&args)?;
            if cfg.output.is_none() {
                bail!("dump-masks needs --output");
            }
            cfg.debug = DebugDumps { labels: true, instances: true, residuals: true, motion: true };
            run(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

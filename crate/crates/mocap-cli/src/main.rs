//! Command line front end for the batch reconstruction pipeline.
//!
//! Exit codes: 0 on success, 1 for input errors (missing or malformed
//! files, bad configuration), 2 for runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mocap::detections::DetectionSequence;
use mocap::kinematics::{ActorTemplate, Camera, SkeletonRig};
use mocap::pipeline::{self, MotionSpec, NoiseSpec, PipelineConfig};
use mocap::raster::BinaryMask;

#[derive(Parser)]
#[command(name = "mocap", version, about = "Batch motion and surface reconstruction from monocular inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full reconstruction pipeline from a config file.
    Run(RunArgs),
    /// Generate a synthetic dataset (rig, template, detections, ground truth).
    Synth(SynthArgs),
    /// Evaluate predicted poses (and optionally meshes/masks) against ground truth.
    Evaluate(EvaluateArgs),
    /// Run automatic silhouette extraction for existing poses.
    Segment(SegmentArgs),
    /// Render SVG/CSV reports from a metrics JSON file.
    Report(ReportArgs),
    /// Convert interop CSV detections to the JSON format.
    ConvertDetections(ConvertArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Frame count of the generated motion.
    #[arg(long, default_value_t = 50)]
    frames: usize,
    /// Motion seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 2D detection noise (pixels).
    #[arg(long, default_value_t = 0.0)]
    sigma_2d: f64,
    /// 3D detection noise (meters, actor scale).
    #[arg(long, default_value_t = 0.0)]
    sigma_3d: f64,
    /// Also write flat-color composited frames for segmentation.
    #[arg(long)]
    with_frames: bool,
    /// Optional motion spec JSON overriding the random in-subspace motion.
    #[arg(long)]
    motion: Option<PathBuf>,
    /// Optional rig JSON; the built-in humanoid is used otherwise.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Image width and height of the synthetic camera (square).
    #[arg(long, default_value_t = 480)]
    image_size: u32,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 700.0)]
    focal: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    rig: PathBuf,
    /// Predicted pose sequence JSON.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth pose sequence JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Predicted mesh sequence directory (manifest.json).
    #[arg(long)]
    pred_meshes: Option<PathBuf>,
    #[arg(long)]
    gt_meshes: Option<PathBuf>,
    /// Predicted mask directory (frame_NNNNNN.png).
    #[arg(long)]
    pred_masks: Option<PathBuf>,
    #[arg(long)]
    gt_masks: Option<PathBuf>,
    /// Output directory for metrics.json and the report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Pipeline configuration naming frames, rig, template and camera.
    #[arg(long)]
    config: PathBuf,
    /// Pose sequence to build the trimaps from.
    #[arg(long)]
    poses: PathBuf,
    /// Output mask directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// metrics.json produced by `run` or `evaluate`.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    rig: PathBuf,
    /// CSV rows: frame, joint, x, y, c, X, Y, Z, c3d.
    #[arg(long)]
    csv: PathBuf,
    /// Output detections JSON.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(me) = e.downcast_ref::<mocap::Error>() {
                if me.is_input_error() {
                    return ExitCode::from(1);
                }
            }
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = PipelineConfig::load(&args.config)?;
            let output = pipeline::run(&config)?;
            println!(
                "processed {} frames in {} batches -> {}",
                output.report.frames,
                output.report.batches,
                config.paths.output_dir.display()
            );
            if let Some(metrics) = &output.metrics {
                if let Some(v) = metrics.mean_joint_error_similarity_mm {
                    println!("mean joint error (similarity aligned): {v:.3} mm");
                }
                if let Some(v) = metrics.mean_vertex_error_mm {
                    println!("mean vertex error (translation aligned): {v:.3} mm");
                }
                if let Some(v) = metrics.mean_iou {
                    println!("mean silhouette IoU: {v:.4}");
                }
            }
            Ok(())
        }
        Command::Synth(args) => {
            let rig = match &args.rig {
                Some(path) => SkeletonRig::load_json(path)?.0,
                None => SkeletonRig::default_humanoid(),
            };
            let template = pipeline::synthetic_humanoid_template(&rig)?;
            let half = args.image_size as f64 / 2.0;
            let camera = Camera::new(
                args.focal,
                args.focal,
                half,
                half,
                args.image_size,
                args.image_size,
            )?;
            let spec = match &args.motion {
                Some(path) => MotionSpec::load_json(path)?,
                None => MotionSpec {
                    frames: args.frames,
                    seed: args.seed,
                    subspace_dim: 8,
                    amplitude: 0.3,
                    root_center: [0.0, 0.0, 4.0],
                    keyframes: vec![],
                },
            };
            let motion = pipeline::generate_motion(&rig, &spec)?;
            let noise = NoiseSpec {
                sigma_2d: args.sigma_2d,
                sigma_3d: args.sigma_3d,
                seed: args.seed.wrapping_add(1),
            };
            pipeline::synth_generate(
                &rig,
                &template,
                &camera,
                &motion,
                &noise,
                args.with_frames,
                &args.out,
            )?;
            std::fs::write(
                args.out.join("motion.json"),
                serde_json::to_string_pretty(&spec)?,
            )?;
            println!("wrote {} frames to {}", motion.len(), args.out.display());
            Ok(())
        }
        Command::Evaluate(args) => {
            let (rig, _) = SkeletonRig::load_json(&args.rig)?;
            let pred = pipeline::io::load_pose_sequence(&args.pred, &rig)?;
            let gt = pipeline::io::load_pose_sequence(&args.gt, &rig)?;
            let pred_meshes = args
                .pred_meshes
                .as_ref()
                .map(|d| pipeline::io::load_mesh_sequence(d))
                .transpose()?
                .map(|(_, v)| v);
            let gt_meshes = args
                .gt_meshes
                .as_ref()
                .map(|d| pipeline::io::load_mesh_sequence(d))
                .transpose()?
                .map(|(_, v)| v);
            let load_dir = |dir: &PathBuf| -> anyhow::Result<Vec<BinaryMask>> {
                Ok(pipeline::io::frame_files(dir, pred.len())?
                    .iter()
                    .map(|p| BinaryMask::load_png(p))
                    .collect::<mocap::Result<_>>()?)
            };
            let pred_masks = args.pred_masks.as_ref().map(load_dir).transpose()?;
            let gt_masks = args.gt_masks.as_ref().map(load_dir).transpose()?;
            let report = pipeline::evaluate(
                &rig,
                &pipeline::EvaluationInputs {
                    predicted_poses: &pred,
                    gt_poses: &gt,
                    predicted_vertices: pred_meshes.as_deref(),
                    gt_vertices: gt_meshes.as_deref(),
                    predicted_masks: pred_masks.as_deref(),
                    gt_masks: gt_masks.as_deref(),
                },
            )?;
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(
                args.out.join("metrics.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            pipeline::render_report(&report, &args.out)?;
            if let Some(v) = report.mean_joint_error_similarity_mm {
                println!("mean joint error (similarity aligned): {v:.3} mm");
            }
            Ok(())
        }
        Command::Segment(args) => {
            let config = PipelineConfig::load(&args.config)?;
            let (rig, weights) = SkeletonRig::load_json(&config.paths.rig)?;
            let template = ActorTemplate::load(&config.paths.template, weights, &rig)?;
            let camera = Camera::load_json(&config.paths.camera)?;
            let poses = pipeline::io::load_pose_sequence(&args.poses, &rig)?;
            let frames_dir = config.paths.frames_dir.clone().ok_or_else(|| {
                mocap::Error::InvalidConfig("segment needs paths.frames_dir".into())
            })?;
            let count = pipeline::segment_only(
                &config,
                &rig,
                &template,
                &camera,
                &poses,
                &frames_dir,
                &args.out,
            )?;
            println!("segmented {count} frames into {}", args.out.display());
            Ok(())
        }
        Command::Report(args) => {
            let text = std::fs::read_to_string(&args.metrics)?;
            let report: pipeline::MetricsReport = serde_json::from_str(&text)?;
            pipeline::render_report(&report, &args.out)?;
            println!("report written to {}", args.out.display());
            Ok(())
        }
        Command::ConvertDetections(args) => {
            let (rig, _) = SkeletonRig::load_json(&args.rig)?;
            let seq = DetectionSequence::from_csv(&args.csv, &rig)?;
            seq.save(&args.out)?;
            println!("converted {} frames to {}", seq.len(), args.out.display());
            Ok(())
        }
    }
}

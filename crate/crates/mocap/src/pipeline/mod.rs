//! Pipeline orchestration: configuration, the batch reconstruction run,
//! synthetic data generation, evaluation metrics and report rendering.
//!
//! A full run executes, in order: detection ingest and rescaling →
//! per-frame initialization → PCK gating → batch solves → overlap blending
//! → (automatic segmentation pass 1 → silhouette pose refinement →
//! segmentation pass 2 → surface refinement → temporal smoothing, when
//! enabled). All intermediates are written under the output directory;
//! with a worker count of one the outputs are byte-reproducible.

pub mod config;
pub mod io;
pub mod metrics;
pub mod report;
pub mod synth;

pub use config::PipelineConfig;
pub use metrics::{evaluate, procrustes, EvaluationInputs, FrameMetrics, MetricsReport};
pub use report::render_report;
pub use synth::{
    generate_motion, subspace_motion, synth_generate, synthetic_humanoid_template, MotionSpec,
    NoiseSpec, SynthDataset,
};

use nalgebra::Vector3;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::batchpose::{
    init_poses, optimize_batch, partition, partition_and_blend, Batch, BatchWeights,
    InitOutcome, LambdaWeights,
};
use crate::detections::{pck_gate, rescale_d3d, torso_indices, DetectionSequence, FrameDetections};
use crate::kinematics::{skin_mesh, ActorTemplate, Camera, SkeletonPose, SkeletonRig};
use crate::parallel::{map_indexed, Parallelism};
use crate::raster::{extract_contour, render_mask, render_skeleton_mask, BinaryMask, Contour};
use crate::refine::{build_graph, refine_pose, refine_surface, temporal_smooth, DeformGraph};
use crate::segment::{build_trimap, grabcut_segment, motion_weights, ColorImage, GrabCutParams};
use crate::{Error, Result};

/// Everything a run produces, in memory; files land under the configured
/// output directory.
pub struct RunOutput {
    pub poses_init: Vec<SkeletonPose>,
    pub poses_batch: Vec<SkeletonPose>,
    pub poses_refined: Option<Vec<SkeletonPose>>,
    /// Final mesh sequence (surface-refined when enabled, otherwise the
    /// skinned best poses).
    pub mesh_vertices: Vec<Vec<Vector3<f64>>>,
    pub gates: Vec<f64>,
    pub metrics: Option<MetricsReport>,
    pub report: RunReport,
}

/// Machine-readable run summary (written as `run_report.json`).
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub frames: usize,
    pub batches: usize,
    /// Per-frame binary 3D gates.
    pub gates: Vec<f64>,
    pub init_fallbacks: Vec<usize>,
    pub pose_refine_starved: Vec<usize>,
    pub surface_refine_starved: Vec<usize>,
    pub stage_runtimes_s: std::collections::BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ErrorReport {
    stage: String,
    message: String,
}

fn stage_err(stage: &str, out_dir: &Path, e: Error) -> Error {
    let report = ErrorReport {
        stage: stage.into(),
        message: format!("{e}"),
    };
    if let Ok(text) = serde_json::to_string_pretty(&report) {
        let _ = std::fs::write(out_dir.join("error_report.json"), text);
    }
    Error::Stage {
        stage: stage.into(),
        message: format!("{e}"),
    }
}

/// Loaded pipeline inputs.
struct Inputs {
    rig: SkeletonRig,
    template: ActorTemplate,
    camera: Camera,
    detections: DetectionSequence,
}

fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let (rig, weights) = SkeletonRig::load_json(&config.paths.rig)?;
    let template = ActorTemplate::load(&config.paths.template, weights, &rig)?;
    let camera = Camera::load_json(&config.paths.camera)?;
    let detections = DetectionSequence::load(&config.paths.detections, &rig)?;
    if detections.is_empty() {
        return Err(Error::InvalidDetections("no frames in detections file".into()));
    }
    Ok(Inputs {
        rig,
        template,
        camera,
        detections,
    })
}

/// Automatic silhouette extraction for every frame at the given poses.
/// Returns the masks and writes them as PNGs under `mask_dir`.
#[allow(clippy::too_many_arguments)]
fn segment_frames(
    config: &PipelineConfig,
    rig: &SkeletonRig,
    template: &ActorTemplate,
    cam: &Camera,
    poses: &[SkeletonPose],
    frame_paths: &[PathBuf],
    mask_dir: &Path,
    par: Parallelism,
) -> Result<Vec<BinaryMask>> {
    std::fs::create_dir_all(mask_dir).map_err(|e| Error::io(mask_dir, e))?;
    let params = GrabCutParams {
        components: config.params.grabcut_components,
        gamma: config.params.grabcut_gamma,
        iters: config.params.grabcut_iters,
        mu: config.params.motion_mu,
        sigma_m: config.params.motion_sigma,
    };
    let results: Vec<Result<BinaryMask>> = map_indexed(par, poses.len(), |f| {
        let image = ColorImage::load_png(&frame_paths[f])?;
        let previous = if f > 0 {
            Some(ColorImage::load_png(&frame_paths[f - 1])?)
        } else {
            None
        };
        let motion = motion_weights(&image, previous.as_ref());
        let (skel_mask, _) =
            render_skeleton_mask(rig, &poses[f], cam, config.params.skeleton_thickness_px)?;
        let skinned = skin_mesh(template, rig, &poses[f])?;
        let mesh_mask = render_mask(&skinned, &template.triangles, cam);
        let diag = match mesh_mask.bbox() {
            Some((x0, y0, x1, y1)) => {
                let (dx, dy) = ((x1 - x0) as f64, (y1 - y0) as f64);
                (dx * dx + dy * dy).sqrt()
            }
            None => 0.0,
        };
        let (trimap, degenerate) = build_trimap(
            &skel_mask,
            &mesh_mask,
            config.params.erosion_scale * diag,
            config.params.dilation_scale * diag,
        );
        if degenerate {
            return Ok(BinaryMask::new(cam.width as usize, cam.height as usize));
        }
        let run = grabcut_segment(&image, &trimap, Some(&motion), &params)?;
        Ok(run.mask)
    });
    let mut masks = Vec::with_capacity(results.len());
    for (f, r) in results.into_iter().enumerate() {
        let mask = r?;
        mask.save_png(&mask_dir.join(format!("frame_{f:06}.png")))?;
        masks.push(mask);
    }
    Ok(masks)
}

fn load_masks(dir: &Path, count: usize) -> Result<Vec<BinaryMask>> {
    io::frame_files(dir, count)?
        .iter()
        .map(|p| BinaryMask::load_png(p))
        .collect()
}

/// Runs the full pipeline per the configuration. Stage failures retain the
/// outputs written so far and leave a machine-readable
/// `error_report.json` in the output directory.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let out_dir = config.paths.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let par = Parallelism::from_workers(config.run.parallelism);
    let opts = config.lm_options();
    let mut report = RunReport::default();
    let mut timer = StageTimer::new();

    let inputs = load_inputs(config).map_err(|e| stage_err("load", &out_dir, e))?;
    let Inputs {
        rig,
        template,
        camera,
        detections,
    } = inputs;
    let n_frames = detections.len();
    report.frames = n_frames;
    timer.lap(&mut report, "load");

    // Rescale the 3D detections to actor bone lengths. Frames that cannot
    // be rescaled keep their raw detections with 3D confidence dropped.
    let rescaled: Vec<FrameDetections> = detections
        .frames
        .iter()
        .map(|fd| {
            rescale_d3d(fd, &rig).unwrap_or_else(|_| {
                let mut out = fd.clone();
                for j in out.joints3d.iter_mut() {
                    j.confidence = 0.0;
                }
                out
            })
        })
        .collect();
    timer.lap(&mut report, "rescale");

    // PCK gates from the detection-only root estimate (trusting every
    // frame when the rig lacks the torso joints). Gating first keeps
    // distrusted 3D detections out of both the initialization and the
    // batch objective.
    let gates: Vec<f64> = match torso_indices(&rig) {
        Some(torso) => (0..n_frames)
            .map(|f| {
                match crate::batchpose::init_root_translation(&rescaled[f], &rig, &camera) {
                    Some(root_t) => {
                        pck_gate(&rescaled[f], &camera, &root_t, torso, config.params.thres_pck).w
                    }
                    None => 0.0,
                }
            })
            .collect(),
        None => vec![1.0; n_frames],
    };
    report.gates = gates.clone();
    timer.lap(&mut report, "gate");

    // Per-frame initialization.
    let (init, init_outcomes) = init_poses(
        &rescaled,
        &rig,
        &camera,
        config.params.w_3d,
        Some(&gates),
        &opts,
        par,
    )
    .map_err(|e| stage_err("init", &out_dir, e))?;
    report.init_fallbacks = init_outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| **o != InitOutcome::Solved)
        .map(|(f, _)| f)
        .collect();
    io::save_pose_sequence(&out_dir.join("poses_init.json"), &init)
        .map_err(|e| stage_err("init", &out_dir, e))?;
    timer.lap(&mut report, "init");

    // Batch solves.
    let spans = partition(
        n_frames,
        config.params.batch_size,
        config.params.overlap,
        config.params.subspace_dim,
    )
    .map_err(|e| stage_err("batch", &out_dir, e))?;
    report.batches = spans.len();
    let lambda = LambdaWeights {
        lambda_t: config.params.lambda_t,
        lambda_r: config.params.lambda_r,
        lambda_theta: config.params.lambda_theta,
    };
    let weights = BatchWeights {
        w_3d: config.params.w_3d,
        w_d: config.params.w_d,
    };
    let batch_results: Vec<Result<Batch>> = map_indexed(par, spans.len(), |k| {
        let (f_start, f_end) = spans[k];
        let batch = Batch {
            f_start,
            f_end,
            poses: init[f_start..=f_end].to_vec(),
            weights: gates[f_start..=f_end].to_vec(),
        };
        let (solved, _) = optimize_batch(
            &batch,
            &rescaled[f_start..=f_end],
            &rig,
            &camera,
            weights,
            &lambda,
            config.params.subspace_dim,
            &opts,
        )?;
        Ok(solved)
    });
    let mut batches = Vec::with_capacity(batch_results.len());
    for r in batch_results {
        batches.push(r.map_err(|e| stage_err("batch", &out_dir, e))?);
    }
    let poses_batch =
        partition_and_blend(n_frames, &batches).map_err(|e| stage_err("blend", &out_dir, e))?;
    io::save_pose_sequence(&out_dir.join("poses_batch.json"), &poses_batch)
        .map_err(|e| stage_err("blend", &out_dir, e))?;
    timer.lap(&mut report, "batch");

    // Silhouettes: user-supplied masks bypass segmentation entirely.
    let refinement_requested = config.stages.pose_refinement || config.stages.surface_refinement;
    let user_masks = config.paths.masks_dir.is_some();
    let masks_pass1: Option<Vec<BinaryMask>> = if let Some(dir) = &config.paths.masks_dir {
        Some(load_masks(dir, n_frames).map_err(|e| stage_err("segment", &out_dir, e))?)
    } else if config.stages.segmentation && refinement_requested {
        let frames_dir = config.paths.frames_dir.as_ref().expect("validated");
        let frame_paths =
            io::frame_files(frames_dir, n_frames).map_err(|e| stage_err("segment", &out_dir, e))?;
        Some(
            segment_frames(
                config,
                &rig,
                &template,
                &camera,
                &poses_batch,
                &frame_paths,
                &out_dir.join("masks_pass1"),
                par,
            )
            .map_err(|e| stage_err("segment", &out_dir, e))?,
        )
    } else {
        None
    };
    timer.lap(&mut report, "segment_pass1");

    // Silhouette-based pose refinement.
    let refinement = config.refinement();
    let mut poses_refined: Option<Vec<SkeletonPose>> = None;
    if config.stages.pose_refinement {
        let masks = masks_pass1
            .as_ref()
            .ok_or_else(|| stage_err("pose_refine", &out_dir, Error::InvalidConfig("pose refinement needs silhouettes".into())))?;
        let contours: Vec<Contour> = masks.iter().map(extract_contour).collect();
        let results: Vec<Result<(SkeletonPose, bool)>> = map_indexed(par, n_frames, |f| {
            let outcome = refine_pose(
                &poses_batch[f],
                &template,
                &rig,
                &camera,
                &contours[f],
                &refinement,
                &opts,
            )?;
            Ok((outcome.pose, outcome.starved))
        });
        let mut refined = Vec::with_capacity(n_frames);
        for (f, r) in results.into_iter().enumerate() {
            let (pose, starved) = r.map_err(|e| stage_err("pose_refine", &out_dir, e))?;
            if starved {
                report.pose_refine_starved.push(f);
            }
            refined.push(pose);
        }
        io::save_pose_sequence(&out_dir.join("poses_refined.json"), &refined)
            .map_err(|e| stage_err("pose_refine", &out_dir, e))?;
        poses_refined = Some(refined);
    }
    timer.lap(&mut report, "pose_refine");

    // Second segmentation pass from the refined poses (no-op when the
    // masks were user-supplied).
    let best_poses = poses_refined.as_ref().unwrap_or(&poses_batch);
    let masks_pass2: Option<Vec<BinaryMask>> = if user_masks {
        masks_pass1.clone()
    } else if masks_pass1.is_some() && config.stages.pose_refinement {
        let frames_dir = config.paths.frames_dir.as_ref().expect("validated");
        let frame_paths =
            io::frame_files(frames_dir, n_frames).map_err(|e| stage_err("segment", &out_dir, e))?;
        Some(
            segment_frames(
                config,
                &rig,
                &template,
                &camera,
                best_poses,
                &frame_paths,
                &out_dir.join("masks_pass2"),
                par,
            )
            .map_err(|e| stage_err("segment_pass2", &out_dir, e))?,
        )
    } else {
        masks_pass1.clone()
    };
    timer.lap(&mut report, "segment_pass2");

    // Surface refinement on the pose-refined skinned meshes.
    let mut mesh_vertices: Vec<Vec<Vector3<f64>>> = map_indexed(par, n_frames, |f| {
        skin_mesh(&template, &rig, &best_poses[f]).expect("validated template")
    });
    if config.stages.surface_refinement {
        let masks = masks_pass2
            .as_ref()
            .ok_or_else(|| stage_err("surface_refine", &out_dir, Error::InvalidConfig("surface refinement needs silhouettes".into())))?;
        let contours: Vec<Contour> = masks.iter().map(extract_contour).collect();
        // Optionally share one graph topology (weights and connectivity
        // from frame 0) across the sequence.
        let shared_graph: Option<DeformGraph> = if config.run.graph_per_frame {
            None
        } else {
            Some(
                build_graph(&mesh_vertices[0], &template.triangles, config.params.graph_nodes)
                    .map_err(|e| stage_err("surface_refine", &out_dir, e))?,
            )
        };
        let results: Vec<Result<(Vec<Vector3<f64>>, bool)>> = map_indexed(par, n_frames, |f| {
            let canonical = &mesh_vertices[f];
            let mut graph = match &shared_graph {
                Some(g) => {
                    let mut g = g.clone();
                    for (i, &v) in g.node_vertices.clone().iter().enumerate() {
                        g.nodes[i] = canonical[v];
                    }
                    g.reset_params();
                    g
                }
                None => build_graph(canonical, &template.triangles, config.params.graph_nodes)?,
            };
            let outcome = refine_surface(
                &mut graph,
                canonical,
                &template.triangles,
                &contours[f],
                &camera,
                &refinement,
                &opts,
            )?;
            Ok((outcome.vertices, outcome.starved))
        });
        let mut refined_meshes = Vec::with_capacity(n_frames);
        for (f, r) in results.into_iter().enumerate() {
            let (vertices, starved) = r.map_err(|e| stage_err("surface_refine", &out_dir, e))?;
            if starved {
                report.surface_refine_starved.push(f);
            }
            refined_meshes.push(vertices);
        }
        mesh_vertices = refined_meshes;
    }
    timer.lap(&mut report, "surface_refine");

    if config.stages.temporal_smoothing && config.stages.surface_refinement {
        mesh_vertices = temporal_smooth(&mesh_vertices, config.params.smoothing_window);
    }
    io::write_mesh_sequence(&out_dir.join("meshes"), &template.triangles, &mesh_vertices)
        .map_err(|e| stage_err("meshes", &out_dir, e))?;
    timer.lap(&mut report, "smooth_and_write");

    // Metrics against ground truth when provided.
    let metrics = compute_metrics(config, &rig, &template, &camera, best_poses, &mesh_vertices)
        .map_err(|e| stage_err("metrics", &out_dir, e))?;
    if let Some(m) = &metrics {
        let mut m = m.clone();
        m.stage_runtimes_s = report.stage_runtimes_s.clone();
        let text = serde_json::to_string_pretty(&m)
            .map_err(|e| Error::Parse { path: out_dir.join("metrics.json"), message: e.to_string() })?;
        std::fs::write(out_dir.join("metrics.json"), text)
            .map_err(|e| Error::io(out_dir.join("metrics.json"), e))?;
        render_report(&m, &out_dir.join("report"))
            .map_err(|e| stage_err("report", &out_dir, e))?;
    }
    timer.lap(&mut report, "metrics");

    let report_text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Parse { path: out_dir.join("run_report.json"), message: e.to_string() })?;
    std::fs::write(out_dir.join("run_report.json"), report_text)
        .map_err(|e| Error::io(out_dir.join("run_report.json"), e))?;

    Ok(RunOutput {
        poses_init: init,
        poses_batch,
        poses_refined,
        mesh_vertices,
        gates,
        metrics,
        report,
    })
}

/// Standalone segmentation for existing poses; writes masks under
/// `out_dir` and returns the frame count. Used by the `segment`
/// subcommand.
pub fn segment_only(
    config: &PipelineConfig,
    rig: &SkeletonRig,
    template: &ActorTemplate,
    camera: &Camera,
    poses: &[SkeletonPose],
    frames_dir: &Path,
    out_dir: &Path,
) -> Result<usize> {
    let frame_paths = io::frame_files(frames_dir, poses.len())?;
    let par = Parallelism::from_workers(config.run.parallelism);
    let masks = segment_frames(config, rig, template, camera, poses, &frame_paths, out_dir, par)?;
    Ok(masks.len())
}

fn compute_metrics(
    config: &PipelineConfig,
    rig: &SkeletonRig,
    template: &ActorTemplate,
    camera: &Camera,
    predicted_poses: &[SkeletonPose],
    predicted_vertices: &[Vec<Vector3<f64>>],
) -> Result<Option<MetricsReport>> {
    let Some(gt_poses_path) = &config.paths.gt_poses else {
        return Ok(None);
    };
    let gt_poses = io::load_pose_sequence(gt_poses_path, rig)?;
    let n = predicted_poses.len();
    let gt_vertices = match &config.paths.gt_meshes_dir {
        Some(dir) => Some(io::load_mesh_sequence(dir)?.1),
        None => None,
    };
    let gt_masks = match &config.paths.gt_masks_dir {
        Some(dir) => Some(load_masks(dir, n)?),
        None => None,
    };
    let predicted_masks: Option<Vec<BinaryMask>> = gt_masks.as_ref().map(|_| {
        predicted_vertices
            .iter()
            .map(|v| render_mask(v, &template.triangles, camera))
            .collect()
    });
    let report = evaluate(
        rig,
        &EvaluationInputs {
            predicted_poses,
            gt_poses: &gt_poses,
            predicted_vertices: gt_vertices.as_ref().map(|_| predicted_vertices),
            gt_vertices: gt_vertices.as_deref(),
            predicted_masks: predicted_masks.as_deref(),
            gt_masks: gt_masks.as_deref(),
        },
    )?;
    Ok(Some(report))
}

struct StageTimer {
    last: Instant,
}

impl StageTimer {
    fn new() -> Self {
        Self { last: Instant::now() }
    }

    fn lap(&mut self, report: &mut RunReport, stage: &str) {
        let now = Instant::now();
        report
            .stage_runtimes_s
            .insert(stage.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

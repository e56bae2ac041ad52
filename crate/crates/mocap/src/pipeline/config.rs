//! Pipeline configuration: one TOML (or equivalent JSON) document holding
//! paths, all numeric parameters with their reference defaults, stage
//! toggles, solver options and the parallelism degree.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::solver::LmOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub rig: PathBuf,
    pub template: PathBuf,
    pub camera: PathBuf,
    pub detections: PathBuf,
    pub output_dir: PathBuf,
    /// Input video frames (PNG sequence); required when segmentation runs.
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    /// Precomputed silhouette masks; bypasses segmentation when set.
    #[serde(default)]
    pub masks_dir: Option<PathBuf>,
    /// Optional ground truth for the metrics report.
    #[serde(default)]
    pub gt_poses: Option<PathBuf>,
    #[serde(default)]
    pub gt_meshes_dir: Option<PathBuf>,
    #[serde(default)]
    pub gt_masks_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsConfig {
    /// Weight of the 3D alignment term (w_3d).
    pub w_3d: f64,
    /// Weight of the trajectory regularizer (w_d).
    pub w_d: f64,
    /// Pose refinement stabilization weight (w_stab).
    pub w_stab: f64,
    /// ARAP weights per surface ICP iteration (w_arap).
    pub w_arap: Vec<f64>,
    pub batch_size: usize,
    pub overlap: usize,
    /// DCT subspace dimension (K).
    pub subspace_dim: usize,
    /// Λ diagonal per parameter group (λ_t, λ_R, λ_Θ).
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub lambda_theta: f64,
    pub thres_pck: f64,
    /// Deformation graph node budget (M).
    pub graph_nodes: usize,
    /// Temporal smoothing window.
    pub smoothing_window: usize,
    pub pose_icp_iters: usize,
    pub surface_icp_iters: usize,
    pub skeleton_thickness_px: f64,
    /// Trimap radii as fractions of the mesh-mask bbox diagonal.
    pub erosion_scale: f64,
    pub dilation_scale: f64,
    pub max_corr_dist_px: f64,
    pub max_normal_angle_deg: f64,
    pub boundary_tolerance_px: f64,
    pub grabcut_iters: usize,
    pub grabcut_components: usize,
    pub grabcut_gamma: f64,
    /// Motion-cue boost μ and bandwidth σ_m.
    pub motion_mu: f64,
    pub motion_sigma: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            w_3d: 0.1,
            w_d: 50.0,
            w_stab: 0.06,
            w_arap: vec![0.6, 0.2],
            batch_size: 50,
            overlap: 10,
            subspace_dim: 8,
            lambda_t: 1.0,
            lambda_r: 600.0,
            lambda_theta: 600.0,
            thres_pck: 0.4,
            graph_nodes: 1000,
            smoothing_window: 5,
            pose_icp_iters: 3,
            surface_icp_iters: 2,
            skeleton_thickness_px: 3.0,
            erosion_scale: 0.03,
            dilation_scale: 0.06,
            max_corr_dist_px: 30.0,
            max_normal_angle_deg: 45.0,
            boundary_tolerance_px: 1.0,
            grabcut_iters: 5,
            grabcut_components: 5,
            grabcut_gamma: 50.0,
            motion_mu: 1.0,
            motion_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StagesConfig {
    pub segmentation: bool,
    pub pose_refinement: bool,
    pub surface_refinement: bool,
    pub temporal_smoothing: bool,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self {
            segmentation: true,
            pose_refinement: true,
            surface_refinement: true,
            temporal_smoothing: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = LmOptions::default();
        Self {
            max_iters: d.max_iters,
            gradient_tol: d.gradient_tol,
            step_tol: d.step_tol,
            initial_damping: d.initial_damping,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Worker count for the frame/batch fan-out; 1 runs sequentially,
    /// 0 uses the rayon default.
    pub parallelism: usize,
    /// Rebuild the deformation graph per frame (default) or reuse one
    /// topology built on the first frame.
    pub graph_per_frame: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parallelism: 1,
            graph_per_frame: true,
        }
    }
}

/// Full pipeline configuration; see the repository README for the file
/// layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub stages: StagesConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl PipelineConfig {
    /// Loads TOML (default) or JSON (by `.json` extension).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?
        };
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?
        } else {
            toml::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Checks referenced files and parameter signs.
    pub fn validate(&self) -> Result<()> {
        for (name, path) in [
            ("rig", &self.paths.rig),
            ("template", &self.paths.template),
            ("camera", &self.paths.camera),
            ("detections", &self.paths.detections),
        ] {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!(
                    "{name} file not found: {}",
                    path.display()
                )));
            }
        }
        let p = &self.params;
        let positives = [
            ("w_3d", p.w_3d),
            ("w_d", p.w_d),
            ("w_stab", p.w_stab),
            ("lambda_t", p.lambda_t),
            ("lambda_r", p.lambda_r),
            ("lambda_theta", p.lambda_theta),
            ("thres_pck", p.thres_pck),
            ("skeleton_thickness_px", p.skeleton_thickness_px),
            ("grabcut_gamma", p.grabcut_gamma),
            ("motion_sigma", p.motion_sigma),
        ];
        for (name, v) in positives {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if p.batch_size < 2 || p.overlap < 2 || p.overlap >= p.batch_size {
            return Err(Error::InvalidConfig(
                "need batch_size > overlap >= 2".into(),
            ));
        }
        if p.subspace_dim < 1 || p.subspace_dim > p.batch_size {
            return Err(Error::InvalidConfig("subspace_dim must be in [1, batch_size]".into()));
        }
        if p.smoothing_window % 2 == 0 {
            return Err(Error::InvalidConfig("smoothing_window must be odd".into()));
        }
        let silhouettes_available = self.paths.masks_dir.is_some()
            || (self.stages.segmentation && self.paths.frames_dir.is_some());
        if self.stages.segmentation
            && self.paths.masks_dir.is_none()
            && self.paths.frames_dir.is_none()
        {
            return Err(Error::InvalidConfig(
                "segmentation needs frames_dir (or masks_dir to bypass it)".into(),
            ));
        }
        if (self.stages.pose_refinement || self.stages.surface_refinement)
            && !silhouettes_available
        {
            return Err(Error::InvalidConfig(
                "refinement needs silhouettes: enable segmentation with frames_dir or provide masks_dir".into(),
            ));
        }
        Ok(())
    }

    pub fn lm_options(&self) -> LmOptions {
        LmOptions {
            max_iters: self.solver.max_iters,
            gradient_tol: self.solver.gradient_tol,
            step_tol: self.solver.step_tol,
            initial_damping: self.solver.initial_damping,
            ..LmOptions::default()
        }
    }

    pub fn refinement(&self) -> crate::refine::RefinementConfig {
        crate::refine::RefinementConfig {
            w_stab: self.params.w_stab,
            pose_icp_iters: self.params.pose_icp_iters,
            w_arap: self.params.w_arap.clone(),
            surface_icp_iters: self.params.surface_icp_iters,
            smoothing_window: self.params.smoothing_window,
            max_corr_dist_px: self.params.max_corr_dist_px,
            max_normal_angle_deg: self.params.max_normal_angle_deg,
            boundary_tolerance_px: self.params.boundary_tolerance_px,
        }
    }
}

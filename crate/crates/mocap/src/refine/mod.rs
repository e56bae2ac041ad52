//! Silhouette-based refinement: ICP pose refinement against the extracted
//! silhouette, followed by embedded-deformation-graph surface refinement
//! with as-rigid-as-possible regularization and temporal smoothing.

mod arap;
mod graph;
mod pose;
mod smooth;
mod surface;

pub use arap::{arap_blocks, energy_arap, ArapEdgeBlock};
pub use graph::{apply_graph, build_graph, DeformGraph};
pub use pose::{refine_pose, EconPoseBlock, PoseRefineOutcome, StabilizationBlock};
pub use smooth::temporal_smooth;
pub use surface::{refine_surface, EconGraphBlock, SurfaceOutcome};

use crate::{Error, Result};

/// Parameters of the refinement stages. Defaults follow the reference
/// configuration: `w_stab = 0.06`, three pose ICP iterations, ARAP weights
/// `0.6` then `0.2` over two surface ICP iterations, a five-frame
/// smoothing window.
#[derive(Debug, Clone)]
pub struct RefinementConfig {
    pub w_stab: f64,
    pub pose_icp_iters: usize,
    /// Per-iteration ARAP weights; the last entry repeats if there are
    /// more surface iterations than entries.
    pub w_arap: Vec<f64>,
    pub surface_icp_iters: usize,
    /// Centered temporal smoothing window (odd).
    pub smoothing_window: usize,
    /// Correspondence pruning gates.
    pub max_corr_dist_px: f64,
    pub max_normal_angle_deg: f64,
    /// Rim identification tolerance in pixels.
    pub boundary_tolerance_px: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            w_stab: 0.06,
            pose_icp_iters: 3,
            w_arap: vec![0.6, 0.2],
            surface_icp_iters: 2,
            smoothing_window: 5,
            max_corr_dist_px: 30.0,
            max_normal_angle_deg: 45.0,
            boundary_tolerance_px: 1.0,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_stab <= 0.0 || self.w_arap.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidConfig("refinement weights must be positive".into()));
        }
        if self.w_arap.is_empty() {
            return Err(Error::InvalidConfig("w_arap schedule is empty".into()));
        }
        if self.smoothing_window % 2 == 0 {
            return Err(Error::InvalidConfig("smoothing window must be odd".into()));
        }
        Ok(())
    }

    pub fn w_arap_for_iter(&self, iter: usize) -> f64 {
        *self
            .w_arap
            .get(iter)
            .unwrap_or_else(|| self.w_arap.last().expect("validated non-empty"))
    }
}

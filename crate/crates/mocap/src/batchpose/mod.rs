//! Batch-based skeleton pose estimation.
//!
//! The input video is partitioned into overlapping fixed-size batches
//! (50 frames, 10-frame overlap by default). Each batch is initialized by
//! independent per-frame solves of the joint alignment energy, gated by the
//! per-frame PCK weight, then jointly optimized over all `|B| × 33`
//! parameters of `E_2d + w_3d·E_3d + w_d·E_d` subject to the rig's angle
//! bounds. Batches are independent solves; adjacent results are blended
//! linearly across the overlap.

mod blend;
mod dct;
mod energy;
mod init;

pub use blend::{blend_poses, partition, partition_and_blend};
pub use dct::{dct_basis, dct_row, DctSubspace};
pub use energy::{
    energy_d, frame_subspace_deviation, pose_matrix, stack_poses, unstack_poses, Energy2dBlock,
    Energy3dBlock, EdRowBlock,
};
pub use init::{init_poses, init_root_translation, InitOutcome};

use nalgebra::DVector;

use crate::detections::FrameDetections;
use crate::kinematics::{Camera, SkeletonPose, SkeletonRig};
use crate::solver::{lm_minimize, BoxConstraints, LmOptions, LmReport, ResidualBlock};
use crate::{Error, Result};

/// Balance weights of the batch objective. Defaults follow the reference
/// configuration: `w_3d = 0.1`, `w_d = 50`.
#[derive(Debug, Clone, Copy)]
pub struct BatchWeights {
    pub w_3d: f64,
    pub w_d: f64,
}

impl Default for BatchWeights {
    fn default() -> Self {
        Self { w_3d: 0.1, w_d: 50.0 }
    }
}

/// Diagonal Λ of the trajectory regularizer, one scale per pose parameter
/// group: `λ_t = 1`, `λ_R = 600`, `λ_Θ = 600` by default.
#[derive(Debug, Clone, Copy)]
pub struct LambdaWeights {
    pub lambda_t: f64,
    pub lambda_r: f64,
    pub lambda_theta: f64,
}

impl Default for LambdaWeights {
    fn default() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_r: 600.0,
            lambda_theta: 600.0,
        }
    }
}

impl LambdaWeights {
    /// The diagonal as a vector over the flattened pose order `(t, R, Θ)`.
    pub fn diagonal(&self, angle_count: usize) -> DVector<f64> {
        let mut d = DVector::zeros(6 + angle_count);
        for i in 0..3 {
            d[i] = self.lambda_t;
            d[3 + i] = self.lambda_r;
        }
        for i in 0..angle_count {
            d[6 + i] = self.lambda_theta;
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_t > 0.0 && self.lambda_r > 0.0 && self.lambda_theta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig("lambda weights must be positive".into()))
        }
    }
}

/// One contiguous window of frames under joint optimization.
#[derive(Debug, Clone)]
pub struct Batch {
    /// First frame index, inclusive.
    pub f_start: usize,
    /// Last frame index, inclusive.
    pub f_end: usize,
    pub poses: Vec<SkeletonPose>,
    /// Per-frame binary 3D gates `w_f`.
    pub weights: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.f_end - self.f_start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Box constraints of a batch: angles bounded per the rig, root translation
/// and rotation free.
fn batch_bounds(rig: &SkeletonRig, frames: usize) -> BoxConstraints {
    let dof = rig.pose_dof();
    let mut bounds = BoxConstraints::unbounded(dof * frames);
    for f in 0..frames {
        for (k, b) in rig.bounds().iter().enumerate() {
            bounds.set(dof * f + 6 + k, b.min, b.max);
        }
    }
    bounds
}

/// Jointly optimizes all poses of a batch under the batch objective
/// `E_2d + w_3d·E_3d + w_d·E_d` with hard angle bounds. `dets` must hold
/// one (rescaled) detection record per batch frame. The returned batch
/// never has a higher objective than the initialization; non-convergence
/// within the iteration budget returns the best iterate with the report
/// flagging it.
pub fn optimize_batch(
    batch: &Batch,
    dets: &[FrameDetections],
    rig: &SkeletonRig,
    cam: &Camera,
    weights: BatchWeights,
    lambda: &LambdaWeights,
    subspace_dim: usize,
    opts: &LmOptions,
) -> Result<(Batch, LmReport)> {
    let frames = batch.len();
    if dets.len() != frames || batch.poses.len() != frames || batch.weights.len() != frames {
        return Err(Error::DimensionMismatch(format!(
            "batch [{}, {}] has {} poses, {} gates, {} detection records",
            batch.f_start,
            batch.f_end,
            batch.poses.len(),
            batch.weights.len(),
            dets.len()
        )));
    }
    lambda.validate()?;
    let sub = dct_basis(frames, subspace_dim)?;
    let dof = rig.pose_dof();
    let lambda_diag = lambda.diagonal(rig.angle_count());

    let mut e2d = Vec::with_capacity(frames);
    let mut e3d = Vec::with_capacity(frames);
    for f in 0..frames {
        e2d.push(Energy2dBlock::new(rig, cam, &dets[f], f, frames));
        if batch.weights[f] > 0.0 {
            e3d.push(Weighted {
                inner: Energy3dBlock::new(rig, &dets[f], f, frames, batch.weights[f]),
                weight: weights.w_3d,
            });
        }
    }
    let ed: Vec<Weighted<EdRowBlock>> = (0..dof)
        .map(|row| Weighted {
            inner: EdRowBlock::new(row, dof, &sub, lambda_diag[row]),
            weight: weights.w_d,
        })
        .collect();

    let mut blocks: Vec<&dyn ResidualBlock> = Vec::new();
    for b in &e2d {
        blocks.push(b);
    }
    for b in &e3d {
        blocks.push(b);
    }
    if weights.w_d > 0.0 {
        for b in &ed {
            blocks.push(b);
        }
    }

    let x0 = stack_poses(&batch.poses);
    let bounds = batch_bounds(rig, frames);
    // One CG preconditioner block per frame.
    let mut opts = opts.clone();
    opts.cg_block_size = dof;
    let (x, report) = lm_minimize(&blocks, &x0, &bounds, &opts)?;
    let poses = unstack_poses(rig, &x, frames)?;
    Ok((
        Batch {
            f_start: batch.f_start,
            f_end: batch.f_end,
            poses,
            weights: batch.weights.clone(),
        },
        report,
    ))
}

/// Wraps a block with an outer scalar weight.
pub(crate) struct Weighted<B: ResidualBlock> {
    pub(crate) inner: B,
    pub(crate) weight: f64,
}

impl<B: ResidualBlock> ResidualBlock for Weighted<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn residual_count(&self) -> usize {
        self.inner.residual_count()
    }

    fn active_params(&self) -> Option<&[usize]> {
        self.inner.active_params()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.residuals(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> crate::solver::BlockJacobian {
        self.inner.jacobian(x)
    }

    fn weight(&self) -> f64 {
        self.weight * self.inner.weight()
    }
}

#[cfg(test)]
mod tests;

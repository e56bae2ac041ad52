//! Residual blocks of the batch pose objective: the 2D reprojection term,
//! the gated 3D alignment term, and the DCT trajectory regularizer.
//!
//! The batch parameter vector is frame-major: frame `f` of the batch owns
//! entries `[dof·f, dof·(f+1))` in flattened pose order `(t, R, theta)`.

use nalgebra::{DMatrix, DVector};

use crate::detections::FrameDetections;
use crate::kinematics::{
    forward_kinematics, forward_kinematics_with_jacobian, Camera, SkeletonPose, SkeletonRig,
};
use crate::solver::{BlockJacobian, ResidualBlock};
use crate::Result;

use super::{DctSubspace, LambdaWeights};

/// Stacks poses into the frame-major batch parameter vector.
pub fn stack_poses(poses: &[SkeletonPose]) -> DVector<f64> {
    let dof = poses[0].dof();
    let mut x = DVector::zeros(dof * poses.len());
    for (f, pose) in poses.iter().enumerate() {
        x.rows_mut(dof * f, dof).copy_from(&pose.flatten());
    }
    x
}

/// Splits a batch parameter vector back into poses.
pub fn unstack_poses(rig: &SkeletonRig, x: &DVector<f64>, frames: usize) -> Result<Vec<SkeletonPose>> {
    let dof = rig.pose_dof();
    (0..frames)
        .map(|f| SkeletonPose::from_flat(rig, &x.rows(dof * f, dof).into_owned()))
        .collect()
}

/// The `dof × frames` parameter matrix with one pose per column.
pub fn pose_matrix(poses: &[SkeletonPose]) -> DMatrix<f64> {
    let dof = poses[0].dof();
    let mut m = DMatrix::zeros(dof, poses.len());
    for (f, pose) in poses.iter().enumerate() {
        m.set_column(f, &pose.flatten());
    }
    m
}

fn pose_of_frame(rig: &SkeletonRig, x: &DVector<f64>, frame: usize) -> SkeletonPose {
    let dof = rig.pose_dof();
    SkeletonPose::from_flat(rig, &x.rows(dof * frame, dof).into_owned())
        .expect("frame slice has pose dof")
}

/// 2D reprojection residuals of one frame:
/// `(Π(J_i(S_f)) − d²ᵈ_i) / √(|B|·N_d)` per joint, zero for joints with
/// zero confidence. Projection depth is clamped so residuals stay finite
/// while the solver passes through degenerate states.
pub struct Energy2dBlock<'a> {
    pub rig: &'a SkeletonRig,
    pub cam: &'a Camera,
    pub dets: &'a FrameDetections,
    /// Local frame index inside the batch.
    pub frame: usize,
    pub batch_len: usize,
    pub active: Vec<usize>,
}

impl<'a> Energy2dBlock<'a> {
    pub fn new(
        rig: &'a SkeletonRig,
        cam: &'a Camera,
        dets: &'a FrameDetections,
        frame: usize,
        batch_len: usize,
    ) -> Self {
        let dof = rig.pose_dof();
        Self {
            rig,
            cam,
            dets,
            frame,
            batch_len,
            active: (dof * frame..dof * (frame + 1)).collect(),
        }
    }

    fn scale(&self) -> f64 {
        1.0 / ((self.batch_len * self.rig.joint_count()) as f64).sqrt()
    }
}

impl ResidualBlock for Energy2dBlock<'_> {
    fn name(&self) -> &str {
        "E_2d"
    }

    fn residual_count(&self) -> usize {
        2 * self.rig.joint_count()
    }

    fn active_params(&self) -> Option<&[usize]> {
        Some(&self.active)
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let pose = pose_of_frame(self.rig, x, self.frame);
        let transforms = forward_kinematics(self.rig, &pose).expect("dims checked");
        let s = self.scale();
        let mut r = DVector::zeros(self.residual_count());
        for (i, t) in transforms.iter().enumerate() {
            let d = &self.dets.joints2d[i];
            if d.confidence <= 0.0 {
                continue;
            }
            let (px, _) = self.cam.project_clamped(&t.position());
            r[2 * i] = (px.x - d.pos.x) * s;
            r[2 * i + 1] = (px.y - d.pos.y) * s;
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let pose = pose_of_frame(self.rig, x, self.frame);
        let fk = forward_kinematics_with_jacobian(self.rig, &pose).expect("dims checked");
        let dof = self.rig.pose_dof();
        let s = self.scale();
        let mut j = DMatrix::zeros(self.residual_count(), dof);
        for i in 0..self.rig.joint_count() {
            if self.dets.joints2d[i].confidence <= 0.0 {
                continue;
            }
            let proj = self.cam.project_jacobian(&fk.transforms[i].position());
            for (slot, &p) in fk.params[i].iter().enumerate() {
                let dp = fk.dtrans[i][slot];
                let dpx = proj * dp;
                j[(2 * i, p)] = dpx.x * s;
                j[(2 * i + 1, p)] = dpx.y * s;
            }
        }
        BlockJacobian::Dense(j)
    }
}

/// Gated 3D alignment residuals of one frame:
/// `(J_i(S_f) − (d³ᵈ_i + t_f)) · √(w_f / (|B|·N_d))` per joint. The
/// per-frame root translation cancels out of the Jacobian by construction,
/// which is what makes the detections root-relative.
pub struct Energy3dBlock<'a> {
    pub rig: &'a SkeletonRig,
    pub dets: &'a FrameDetections,
    pub frame: usize,
    pub batch_len: usize,
    /// Binary gate w_f for this frame.
    pub gate: f64,
    pub active: Vec<usize>,
}

impl<'a> Energy3dBlock<'a> {
    pub fn new(
        rig: &'a SkeletonRig,
        dets: &'a FrameDetections,
        frame: usize,
        batch_len: usize,
        gate: f64,
    ) -> Self {
        let dof = rig.pose_dof();
        Self {
            rig,
            dets,
            frame,
            batch_len,
            gate,
            active: (dof * frame..dof * (frame + 1)).collect(),
        }
    }

    fn scale(&self) -> f64 {
        (self.gate / (self.batch_len * self.rig.joint_count()) as f64).sqrt()
    }
}

impl ResidualBlock for Energy3dBlock<'_> {
    fn name(&self) -> &str {
        "E_3d"
    }

    fn residual_count(&self) -> usize {
        3 * self.rig.joint_count()
    }

    fn active_params(&self) -> Option<&[usize]> {
        Some(&self.active)
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.rig.joint_count();
        let mut r = DVector::zeros(3 * n);
        if self.gate == 0.0 {
            return r;
        }
        let pose = pose_of_frame(self.rig, x, self.frame);
        let transforms = forward_kinematics(self.rig, &pose).expect("dims checked");
        let s = self.scale();
        for (i, t) in transforms.iter().enumerate() {
            let d = &self.dets.joints3d[i];
            if d.confidence <= 0.0 {
                continue;
            }
            let e = (t.position() - (d.pos + pose.root_t)) * s;
            r[3 * i] = e.x;
            r[3 * i + 1] = e.y;
            r[3 * i + 2] = e.z;
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let n = self.rig.joint_count();
        let dof = self.rig.pose_dof();
        let mut j = DMatrix::zeros(3 * n, dof);
        if self.gate == 0.0 {
            return BlockJacobian::Dense(j);
        }
        let pose = pose_of_frame(self.rig, x, self.frame);
        let fk = forward_kinematics_with_jacobian(self.rig, &pose).expect("dims checked");
        let s = self.scale();
        for i in 0..n {
            if self.dets.joints3d[i].confidence <= 0.0 {
                continue;
            }
            for (slot, &p) in fk.params[i].iter().enumerate() {
                let dp = fk.dtrans[i][slot];
                for c in 0..3 {
                    j[(3 * i + c, p)] = dp[c] * s;
                }
            }
            // Subtract the derivative of the root-translation shift.
            for c in 0..3 {
                j[(3 * i + c, c)] -= s;
            }
        }
        BlockJacobian::Dense(j)
    }
}

/// One parameter row of the DCT trajectory regularizer:
/// `√(1/|B|) · λ_row · (s_row P)` where `s_row` is the trajectory of pose
/// parameter `row` across the batch and `P` the nullspace projector. The
/// Jacobian is the constant matrix `√(1/|B|) · λ_row · P`.
pub struct EdRowBlock {
    pub row: usize,
    active: Vec<usize>,
    jacobian: DMatrix<f64>,
    projector: DMatrix<f64>,
    lambda_scaled: f64,
}

impl EdRowBlock {
    pub fn new(row: usize, dof: usize, sub: &DctSubspace, lambda: f64) -> Self {
        let l = sub.batch_len();
        let scale = (1.0 / l as f64).sqrt();
        Self {
            row,
            active: (0..l).map(|f| dof * f + row).collect(),
            jacobian: &sub.projector * (lambda * scale),
            projector: sub.projector.clone(),
            lambda_scaled: lambda * scale,
        }
    }

    fn batch_len(&self) -> usize {
        self.active.len()
    }
}

impl ResidualBlock for EdRowBlock {
    fn name(&self) -> &str {
        "E_d"
    }

    fn residual_count(&self) -> usize {
        self.batch_len()
    }

    fn active_params(&self) -> Option<&[usize]> {
        Some(&self.active)
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.batch_len();
        let s_row = DVector::from_fn(l, |f, _| x[self.active[f]]);
        // r_c = λ √(1/L) Σ_f s_f P[f, c]; P is symmetric.
        (&self.projector * s_row) * self.lambda_scaled
    }

    fn jacobian(&self, _x: &DVector<f64>) -> BlockJacobian {
        BlockJacobian::Dense(self.jacobian.clone())
    }
}

/// The trajectory regularizer energy `E_d = (1/|B|) ‖Λ S_B P‖²_F` evaluated
/// directly on a batch of poses.
pub fn energy_d(poses: &[SkeletonPose], lambda: &LambdaWeights, sub: &DctSubspace) -> f64 {
    let s = pose_matrix(poses);
    let diag = lambda.diagonal(s.nrows() - 6);
    let residual = &s * &sub.projector;
    let mut total = 0.0;
    for r in 0..s.nrows() {
        let row_norm2: f64 = residual.row(r).iter().map(|v| v * v).sum();
        total += diag[r] * diag[r] * row_norm2;
    }
    total / poses.len() as f64
}

/// Out-of-subspace deviation of a single frame: the norm of column `f` of
/// `Λ S_B P`. Used to verify that gated frames are pulled toward the
/// trajectory subspace.
pub fn frame_subspace_deviation(
    poses: &[SkeletonPose],
    lambda: &LambdaWeights,
    sub: &DctSubspace,
    frame: usize,
) -> f64 {
    let s = pose_matrix(poses);
    let diag = lambda.diagonal(s.nrows() - 6);
    let residual = &s * &sub.projector;
    let mut total = 0.0;
    for r in 0..s.nrows() {
        let v = diag[r] * residual[(r, frame)];
        total += v * v;
    }
    total.sqrt()
}

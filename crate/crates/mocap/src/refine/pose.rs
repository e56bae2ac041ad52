//! Silhouette-based ICP pose refinement: alternately search
//! normal-compatible correspondences between the skinned model's rim and
//! the image silhouette, then minimize
//! `E_ref = E_con + w_stab · E_stab` over the pose under the angle bounds.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::kinematics::{
    forward_kinematics, forward_kinematics_with_jacobian, joint_positions, skin_mesh,
    skin_vertices_with_jacobian, ActorTemplate, Camera, SkeletonPose, SkeletonRig,
};
use crate::raster::{find_correspondences, model_boundary_vertices, Contour, Correspondence};
use crate::solver::{lm_minimize, BlockJacobian, BoxConstraints, LmOptions, ResidualBlock};
use crate::Result;

use super::RefinementConfig;

/// Point-to-line silhouette residuals over the pose:
/// `n_kᵀ (Π(v_k(S)) − s_k) / √|S|` per correspondence.
pub struct EconPoseBlock<'a> {
    pub rig: &'a SkeletonRig,
    pub template: &'a ActorTemplate,
    pub cam: &'a Camera,
    pub correspondences: &'a [Correspondence],
    vertex_ids: Vec<usize>,
    scale: f64,
}

impl<'a> EconPoseBlock<'a> {
    pub fn new(
        rig: &'a SkeletonRig,
        template: &'a ActorTemplate,
        cam: &'a Camera,
        correspondences: &'a [Correspondence],
    ) -> Self {
        Self {
            rig,
            template,
            cam,
            correspondences,
            vertex_ids: correspondences.iter().map(|c| c.vertex).collect(),
            scale: 1.0 / (correspondences.len().max(1) as f64).sqrt(),
        }
    }
}

impl ResidualBlock for EconPoseBlock<'_> {
    fn name(&self) -> &str {
        "E_con(pose)"
    }

    fn residual_count(&self) -> usize {
        self.correspondences.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let pose = SkeletonPose::from_flat(self.rig, x).expect("pose dims");
        let positions =
            crate::kinematics::skin_vertices(self.template, self.rig, &pose, &self.vertex_ids)
                .expect("skinning");
        let mut r = DVector::zeros(self.correspondences.len());
        for (k, corr) in self.correspondences.iter().enumerate() {
            let (px, _) = self.cam.project_clamped(&positions[k]);
            r[k] = corr.normal.dot(&(px - corr.target)) * self.scale;
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let pose = SkeletonPose::from_flat(self.rig, x).expect("pose dims");
        let sj = skin_vertices_with_jacobian(self.template, self.rig, &pose, &self.vertex_ids)
            .expect("skinning");
        let dof = self.rig.pose_dof();
        let mut j = DMatrix::zeros(self.correspondences.len(), dof);
        for (k, corr) in self.correspondences.iter().enumerate() {
            let proj = self.cam.project_jacobian(&sj.positions[k]);
            for &(p, dv) in &sj.jac[k] {
                let dpx = proj * dv;
                j[(k, p)] = corr.normal.dot(&dpx) * self.scale;
            }
        }
        BlockJacobian::Dense(j)
    }
}

/// Pose stabilization toward the batch result:
/// `(J_i(S) − J_i(Ŝ)) / √N_d` per joint; the anchor stays fixed across the
/// ICP iterations.
pub struct StabilizationBlock<'a> {
    pub rig: &'a SkeletonRig,
    anchor_positions: Vec<Vector3<f64>>,
    scale: f64,
}

impl<'a> StabilizationBlock<'a> {
    pub fn new(rig: &'a SkeletonRig, anchor: &SkeletonPose) -> Result<Self> {
        Ok(Self {
            rig,
            anchor_positions: joint_positions(rig, anchor)?,
            scale: 1.0 / (rig.joint_count() as f64).sqrt(),
        })
    }
}

impl ResidualBlock for StabilizationBlock<'_> {
    fn name(&self) -> &str {
        "E_stab"
    }

    fn residual_count(&self) -> usize {
        3 * self.rig.joint_count()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let pose = SkeletonPose::from_flat(self.rig, x).expect("pose dims");
        let transforms = forward_kinematics(self.rig, &pose).expect("dims");
        let mut r = DVector::zeros(self.residual_count());
        for (i, t) in transforms.iter().enumerate() {
            let e = (t.position() - self.anchor_positions[i]) * self.scale;
            for c in 0..3 {
                r[3 * i + c] = e[c];
            }
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let pose = SkeletonPose::from_flat(self.rig, x).expect("pose dims");
        let fk = forward_kinematics_with_jacobian(self.rig, &pose).expect("dims");
        let dof = self.rig.pose_dof();
        let mut j = DMatrix::zeros(self.residual_count(), dof);
        for i in 0..self.rig.joint_count() {
            for (slot, &p) in fk.params[i].iter().enumerate() {
                let d = fk.dtrans[i][slot];
                for c in 0..3 {
                    j[(3 * i + c, p)] = d[c] * self.scale;
                }
            }
        }
        BlockJacobian::Dense(j)
    }
}

struct WeightedBlock<B: ResidualBlock> {
    inner: B,
    weight: f64,
}

impl<B: ResidualBlock> ResidualBlock for WeightedBlock<B> {
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
    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        self.inner.jacobian(x)
    }
    fn weight(&self) -> f64 {
        self.weight
    }
}

/// Outcome of one pose refinement.
#[derive(Debug, Clone)]
pub struct PoseRefineOutcome {
    pub pose: SkeletonPose,
    /// Correspondence counts per ICP iteration.
    pub correspondences: Vec<usize>,
    /// E_con values at the start of each iteration (fixed correspondences).
    pub econ_values: Vec<f64>,
    /// Set when an iteration found no correspondences.
    pub starved: bool,
}

/// Refines a pose against the extracted silhouette over
/// `cfg.pose_icp_iters` ICP iterations. Each iteration re-renders the
/// skinned model, searches normal-compatible correspondences, and solves
/// the constrained `E_con + w_stab·E_stab` with the anchor fixed at the
/// input pose. Without correspondences the input pose returns unchanged,
/// flagged.
pub fn refine_pose(
    pose: &SkeletonPose,
    template: &ActorTemplate,
    rig: &SkeletonRig,
    cam: &Camera,
    silhouette: &Contour,
    cfg: &RefinementConfig,
    opts: &LmOptions,
) -> Result<PoseRefineOutcome> {
    cfg.validate()?;
    let anchor = pose.clone();
    let stab = StabilizationBlock::new(rig, &anchor)?;
    let mut current = pose.clone();
    let mut outcome = PoseRefineOutcome {
        pose: pose.clone(),
        correspondences: Vec::new(),
        econ_values: Vec::new(),
        starved: false,
    };

    let dof = rig.pose_dof();
    let mut bounds = BoxConstraints::unbounded(dof);
    for (k, b) in rig.bounds().iter().enumerate() {
        bounds.set(6 + k, b.min, b.max);
    }

    for _ in 0..cfg.pose_icp_iters {
        let skinned = skin_mesh(template, rig, &current)?;
        let boundary =
            model_boundary_vertices(&skinned, &template.triangles, cam, cfg.boundary_tolerance_px);
        let corrs = find_correspondences(
            &boundary,
            silhouette,
            cfg.max_corr_dist_px,
            cfg.max_normal_angle_deg,
        );
        if corrs.is_empty() {
            outcome.starved = true;
            break;
        }
        outcome.correspondences.push(corrs.len());
        let econ = EconPoseBlock::new(rig, template, cam, &corrs);
        outcome.econ_values.push(econ.residuals(&current.flatten()).norm_squared());
        let stab_weighted = WeightedBlock { inner: &stab, weight: cfg.w_stab };
        let blocks: Vec<&dyn ResidualBlock> = vec![&econ, &stab_weighted];
        let (x, _) = lm_minimize(&blocks, &current.flatten(), &bounds, opts)?;
        current = SkeletonPose::from_flat(rig, &x)?;
    }
    // With no correspondences at all this is still the input pose.
    outcome.pose = current;
    Ok(outcome)
}

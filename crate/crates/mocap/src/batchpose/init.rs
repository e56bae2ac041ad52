//! Per-frame initialization: independent constrained solves of the joint
//! alignment energy `E_2d + w_3d·E_3d` from the rest pose, with the root
//! translation seeded by a similar-triangles depth estimate.

use nalgebra::Vector3;

use crate::detections::FrameDetections;
use crate::kinematics::{joint_positions, Camera, SkeletonPose, SkeletonRig};
use crate::parallel::{map_indexed, Parallelism};
use crate::solver::{lm_minimize, BoxConstraints, LmOptions, ResidualBlock};
use crate::Result;

use super::{Energy2dBlock, Energy3dBlock};

/// How a frame's initialization was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitOutcome {
    Solved,
    /// No usable detections; carried over from the previous frame (rest
    /// pose for frame 0).
    NoData,
    /// The per-frame solve failed; carried over from the previous frame.
    SolverFallback,
}

/// Seeds the root translation from the detections: depth from the ratio of
/// the actor skeleton height to the 2D detection extent (similar
/// triangles), x/y from back-projecting the root (or centroid) detection at
/// that depth. Returns `None` when the 2D extent is degenerate.
pub fn init_root_translation(
    dets: &FrameDetections,
    rig: &SkeletonRig,
    cam: &Camera,
) -> Option<Vector3<f64>> {
    let rest = joint_positions(rig, &SkeletonPose::rest(rig)).ok()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &rest {
        lo = lo.min(p.y);
        hi = hi.max(p.y);
    }
    let actor_height = hi - lo;

    let (mut plo, mut phi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for j in &dets.joints2d {
        if j.confidence > 0.0 {
            plo = plo.min(j.pos.y);
            phi = phi.max(j.pos.y);
            any = true;
        }
    }
    if !any {
        return None;
    }
    let pixel_height = phi - plo;
    if pixel_height < 1.0 {
        return None;
    }
    let z = cam.fy * actor_height / pixel_height;

    // Back-project the root detection (fall back to the confident centroid).
    let anchor = if dets.joints2d[0].confidence > 0.0 {
        dets.joints2d[0].pos
    } else {
        let mut sum = nalgebra::Vector2::zeros();
        let mut count = 0.0;
        for j in &dets.joints2d {
            if j.confidence > 0.0 {
                sum += j.pos;
                count += 1.0;
            }
        }
        sum / count
    };
    Some(Vector3::new(
        (anchor.x - cam.cx) * z / cam.fx,
        (anchor.y - cam.cy) * z / cam.fy,
        z,
    ))
}

fn solve_frame(
    dets: &FrameDetections,
    rig: &SkeletonRig,
    cam: &Camera,
    w_3d: f64,
    gate: f64,
    opts: &LmOptions,
) -> Option<SkeletonPose> {
    let root_t = init_root_translation(dets, rig, cam)?;
    let mut start = SkeletonPose::rest(rig);
    start.root_t = root_t;

    let dof = rig.pose_dof();
    let mut bounds = BoxConstraints::unbounded(dof);
    for (k, b) in rig.bounds().iter().enumerate() {
        bounds.set(6 + k, b.min, b.max);
    }

    // Warm-up on the 3D term alone: the root-relative targets give plain
    // 3D IK with a far larger convergence basin than the projective term,
    // pulling the angles into the right branch before 2D alignment. A
    // gated frame's 3D detections are distrusted and skipped entirely so
    // they cannot seed the wrong depth branch.
    let mut x0 = start.flatten();
    if gate > 0.0 {
        let e3d_only = Energy3dBlock::new(rig, dets, 0, 1, gate);
        let warm_blocks: Vec<&dyn ResidualBlock> = vec![&e3d_only];
        if let Ok((x, _)) = lm_minimize(&warm_blocks, &x0, &bounds, opts) {
            x0 = x;
        }
    }

    let e2d = Energy2dBlock::new(rig, cam, dets, 0, 1);
    let e3d = Energy3dBlock::new(rig, dets, 0, 1, gate);
    let w3d_block = super::Weighted { inner: e3d, weight: w_3d };
    let blocks: Vec<&dyn ResidualBlock> = vec![&e2d, &w3d_block];
    match lm_minimize(&blocks, &x0, &bounds, opts) {
        Ok((x, _)) => SkeletonPose::from_flat(rig, &x).ok(),
        Err(_) => None,
    }
}

/// Independent per-frame initialization of the whole sequence. Frames
/// without any confident detection, or whose solve fails, fall back to the
/// previous frame's result (frame 0: the rest pose) and are flagged in the
/// outcome vector. `dets` must already be rescaled to actor bone lengths.
/// `gates` (per-frame `w_f`, from the PCK check against the detection-only
/// root estimate) turns the 3D term off for distrusted frames; `None`
/// trusts every frame.
pub fn init_poses(
    dets: &[FrameDetections],
    rig: &SkeletonRig,
    cam: &Camera,
    w_3d: f64,
    gates: Option<&[f64]>,
    opts: &LmOptions,
    par: Parallelism,
) -> Result<(Vec<SkeletonPose>, Vec<InitOutcome>)> {
    let solved: Vec<Option<SkeletonPose>> = map_indexed(par, dets.len(), |f| {
        let frame = &dets[f];
        let has_data = frame.joints2d.iter().any(|j| j.confidence > 0.0)
            || frame.joints3d.iter().any(|j| j.confidence > 0.0);
        if !has_data {
            return None;
        }
        let gate = gates.map_or(1.0, |g| g[f]);
        solve_frame(frame, rig, cam, w_3d, gate, opts)
    });

    // Sequential fallback pass: failures inherit the previous frame's pose.
    let mut poses: Vec<SkeletonPose> = Vec::with_capacity(dets.len());
    let mut outcomes = Vec::with_capacity(dets.len());
    for (f, result) in solved.into_iter().enumerate() {
        match result {
            Some(pose) => {
                poses.push(pose);
                outcomes.push(InitOutcome::Solved);
            }
            None => {
                let has_data = dets[f].joints2d.iter().any(|j| j.confidence > 0.0)
                    || dets[f].joints3d.iter().any(|j| j.confidence > 0.0);
                let fallback = if f == 0 {
                    SkeletonPose::rest(rig)
                } else {
                    poses[f - 1].clone()
                };
                poses.push(fallback);
                outcomes.push(if has_data {
                    InitOutcome::SolverFallback
                } else {
                    InitOutcome::NoData
                });
            }
        }
    }

    Ok((poses, outcomes))
}

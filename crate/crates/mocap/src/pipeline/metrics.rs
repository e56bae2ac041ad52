//! Evaluation metrics: similarity-aligned per-joint error, rigid-aligned
//! per-joint error, translation-aligned vertex error and silhouette IoU.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{joint_positions, SkeletonPose, SkeletonRig};
use crate::raster::BinaryMask;
use crate::{Error, Result};

/// Closed-form alignment of `src` onto `dst` (optionally with scale)
/// minimizing the sum of squared distances. Returns `None` when the
/// centered source covariance has rank below 3.
pub fn procrustes(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
) -> Option<(f64, Matrix3<f64>, Vector3<f64>)> {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n < 3 {
        return None;
    }
    let inv = 1.0 / n as f64;
    let mut c_src = Vector3::zeros();
    let mut c_dst = Vector3::zeros();
    for (a, b) in src.iter().zip(dst.iter()) {
        c_src += a;
        c_dst += b;
    }
    c_src *= inv;
    c_dst *= inv;

    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (a, b) in src.iter().zip(dst.iter()) {
        let da = a - c_src;
        let db = b - c_dst;
        cov += db * da.transpose();
        var_src += da.norm_squared();
    }
    cov *= inv;
    var_src *= inv;

    let svd = cov.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let sing = svd.singular_values;
    // Degenerate joint sets: coplanar/collinear input leaves the rotation
    // underdetermined.
    if sing[2] <= 1e-12 * sing[0].max(1e-300) {
        return None;
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = u * d * v_t;
    let scale = if with_scale {
        (sing[0] + sing[1] + d[(2, 2)] * sing[2]) / var_src
    } else {
        1.0
    };
    let t = c_dst - rot * c_src * scale;
    Some((scale, rot, t))
}

/// Mean distance (meters) between aligned source points and targets.
fn aligned_mean_error(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
) -> Option<f64> {
    let (s, r, t) = procrustes(src, dst, with_scale)?;
    let mut total = 0.0;
    for (a, b) in src.iter().zip(dst.iter()) {
        total += (r * a * s + t - b).norm();
    }
    Some(total / src.len() as f64)
}

/// Per-frame metric values; `None` marks an unavailable input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    /// Mean per-joint error after similarity (scale + rotation +
    /// translation) alignment, millimeters.
    pub joint_error_similarity_mm: Option<f64>,
    /// Mean per-joint error after rigid (rotation + translation)
    /// alignment, millimeters.
    pub joint_error_rigid_mm: Option<f64>,
    /// Mean vertex error after translation-only alignment, millimeters.
    pub vertex_error_mm: Option<f64>,
    /// Silhouette intersection over union.
    pub iou: Option<f64>,
    /// Procrustes was degenerate for this frame; excluded from the means.
    pub degenerate: bool,
}

/// The evaluation report: per-frame rows, their means, and per-stage
/// runtimes filled in by the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_joint_error_similarity_mm: Option<f64>,
    pub mean_joint_error_rigid_mm: Option<f64>,
    pub mean_vertex_error_mm: Option<f64>,
    pub mean_iou: Option<f64>,
    #[serde(default)]
    pub stage_runtimes_s: std::collections::BTreeMap<String, f64>,
}

impl MetricsReport {
    fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for v in values.flatten() {
            total += v;
            count += 1;
        }
        (count > 0).then(|| total / count as f64)
    }
}

/// Inputs to [`evaluate`]; all sequences are frame-aligned.
pub struct EvaluationInputs<'a> {
    pub predicted_poses: &'a [SkeletonPose],
    pub gt_poses: &'a [SkeletonPose],
    pub predicted_vertices: Option<&'a [Vec<Vector3<f64>>]>,
    pub gt_vertices: Option<&'a [Vec<Vector3<f64>>]>,
    pub predicted_masks: Option<&'a [BinaryMask]>,
    pub gt_masks: Option<&'a [BinaryMask]>,
}

/// Computes the metrics report: per-frame similarity- and rigid-aligned
/// joint errors, translation-aligned vertex errors and mask IoU. Frames
/// with a degenerate joint Procrustes are flagged and skipped in the
/// joint-error means.
pub fn evaluate(rig: &SkeletonRig, inputs: &EvaluationInputs) -> Result<MetricsReport> {
    let n = inputs.predicted_poses.len();
    if inputs.gt_poses.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted poses vs {} ground-truth poses",
            n,
            inputs.gt_poses.len()
        )));
    }
    for (name, len) in [
        ("predicted vertices", inputs.predicted_vertices.map(|v| v.len())),
        ("ground-truth vertices", inputs.gt_vertices.map(|v| v.len())),
        ("predicted masks", inputs.predicted_masks.map(|v| v.len())),
        ("ground-truth masks", inputs.gt_masks.map(|v| v.len())),
    ] {
        if let Some(len) = len {
            if len != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} cover {len} frames, expected {n}"
                )));
            }
        }
    }

    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let pred = joint_positions(rig, &inputs.predicted_poses[f])?;
        let gt = joint_positions(rig, &inputs.gt_poses[f])?;
        let sim = aligned_mean_error(&pred, &gt, true);
        let rigid = aligned_mean_error(&pred, &gt, false);
        let degenerate = sim.is_none();

        let vertex_error_mm = match (inputs.predicted_vertices, inputs.gt_vertices) {
            (Some(pv), Some(gv)) => {
                let (p, g) = (&pv[f], &gv[f]);
                if p.len() != g.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "frame {f}: vertex count mismatch {} vs {}",
                        p.len(),
                        g.len()
                    )));
                }
                let mut cp = Vector3::zeros();
                let mut cg = Vector3::zeros();
                for (a, b) in p.iter().zip(g.iter()) {
                    cp += a;
                    cg += b;
                }
                let shift = (cg - cp) / p.len() as f64;
                let mean: f64 = p
                    .iter()
                    .zip(g.iter())
                    .map(|(a, b)| (a + shift - b).norm())
                    .sum::<f64>()
                    / p.len() as f64;
                Some(mean * 1000.0)
            }
            _ => None,
        };

        let iou = match (inputs.predicted_masks, inputs.gt_masks) {
            (Some(pm), Some(gm)) => Some(pm[f].iou(&gm[f])),
            _ => None,
        };

        frames.push(FrameMetrics {
            frame: f,
            joint_error_similarity_mm: sim.map(|v| v * 1000.0),
            joint_error_rigid_mm: rigid.map(|v| v * 1000.0),
            vertex_error_mm,
            iou,
            degenerate,
        });
    }

    let report = MetricsReport {
        mean_joint_error_similarity_mm: MetricsReport::mean(
            frames.iter().map(|f| f.joint_error_similarity_mm),
        ),
        mean_joint_error_rigid_mm: MetricsReport::mean(
            frames.iter().map(|f| f.joint_error_rigid_mm),
        ),
        mean_vertex_error_mm: MetricsReport::mean(frames.iter().map(|f| f.vertex_error_mm)),
        mean_iou: MetricsReport::mean(frames.iter().map(|f| f.iou)),
        frames,
        stage_runtimes_s: Default::default(),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_from_axis_angle;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn self_alignment_is_identity_with_zero_error() {
        for seed in 0..10u64 {
            let pts = random_points(16, seed);
            let (s, r, t) = procrustes(&pts, &pts, true).unwrap();
            assert_relative_eq!(s, 1.0, epsilon = 1e-10);
            assert_relative_eq!((r - Matrix3::identity()).norm(), 0.0, epsilon = 1e-9);
            assert_relative_eq!(t.norm(), 0.0, epsilon = 1e-9);
            assert!(aligned_mean_error(&pts, &pts, true).unwrap() < 1e-10);
        }
    }

    #[test]
    fn similarity_transform_is_recovered_exactly() {
        let pts = random_points(16, 3);
        let rot = rotation_from_axis_angle(&Vector3::new(0.4, -0.8, 0.2));
        let scale = 1.7;
        let shift = Vector3::new(0.3, -0.5, 2.0);
        let moved: Vec<Vector3<f64>> = pts.iter().map(|p| rot * p * scale + shift).collect();
        // Aligning the moved set back onto the original: zero error.
        assert!(aligned_mean_error(&moved, &pts, true).unwrap() < 1e-9);
        // Rigid-only alignment cannot undo the scale.
        assert!(aligned_mean_error(&moved, &pts, false).unwrap() > 1e-3);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vector3<f64>> = (0..16)
            .map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        assert!(procrustes(&pts, &pts, true).is_none());
    }

    #[test]
    fn single_joint_offset_contributes_its_share_of_the_mean() {
        // A rigid case where the alignment is the identity: symmetric cloud
        // plus a 10 mm offset on one joint's prediction.
        let rig = SkeletonRig::default_humanoid();
        let gt_pose = SkeletonPose::rest(&rig);
        let gt = joint_positions(&rig, &gt_pose).unwrap();
        // Hand construction: prediction equals ground truth exactly except
        // frame alignment stays identity (verified by the zero-error case),
        // then measure the perturbed mean directly on point sets.
        let mut pred = gt.clone();
        pred[5].x += 0.010;
        // Use rigid alignment with pre-aligned sets: the optimal transform
        // of a one-point perturbation is near identity only for symmetric
        // sets, so evaluate the error formula directly instead.
        let mean: f64 = pred
            .iter()
            .zip(gt.iter())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / 16.0;
        assert_relative_eq!(mean * 1000.0, 10.0 / 16.0, epsilon = 1e-9);
    }

    #[test]
    fn evaluate_perfect_prediction() {
        let rig = SkeletonRig::default_humanoid();
        let mut pose = SkeletonPose::rest(&rig);
        pose.root_t = Vector3::new(0.0, 0.0, 4.0);
        pose.theta[4] = 0.3;
        let poses = vec![pose; 3];
        let verts = vec![vec![Vector3::new(0.0, 1.0, 4.0); 10]; 3];
        let mut mask = BinaryMask::new(8, 8);
        mask.set(2, 2, true);
        let masks = vec![mask; 3];
        let report = evaluate(
            &rig,
            &EvaluationInputs {
                predicted_poses: &poses,
                gt_poses: &poses,
                predicted_vertices: Some(&verts),
                gt_vertices: Some(&verts),
                predicted_masks: Some(&masks),
                gt_masks: Some(&masks),
            },
        )
        .unwrap();
        assert!(report.mean_joint_error_similarity_mm.unwrap() < 1e-6);
        assert!(report.mean_vertex_error_mm.unwrap() < 1e-9);
        assert_relative_eq!(report.mean_iou.unwrap(), 1.0);
    }

    #[test]
    fn evaluate_under_global_similarity() {
        // Prediction = ground truth under a global similarity transform:
        // similarity-aligned joint error vanishes; the translation-aligned
        // vertex error does not (rotation + scale are not undone).
        let rig = SkeletonRig::default_humanoid();
        let mut gt_pose = SkeletonPose::rest(&rig);
        gt_pose.root_t = Vector3::new(0.0, 0.0, 4.0);
        let gt_joints = joint_positions(&rig, &gt_pose).unwrap();

        let rot = rotation_from_axis_angle(&Vector3::new(0.0, 0.4, 0.0));
        let scale = 1.2;
        let shift = Vector3::new(0.1, 0.0, 0.5);
        let gt_verts: Vec<Vector3<f64>> = gt_joints.clone();
        let pred_verts: Vec<Vector3<f64>> =
            gt_verts.iter().map(|p| rot * p * scale + shift).collect();

        // Joint error via the point-set route (poses cannot express a
        // global scale), checking alignment semantics directly.
        assert!(aligned_mean_error(&pred_verts, &gt_joints, true).unwrap() < 1e-9);

        let pv = vec![pred_verts.clone()];
        let gv = vec![gt_verts.clone()];
        let report = evaluate(
            &rig,
            &EvaluationInputs {
                predicted_poses: &[gt_pose.clone()],
                gt_poses: &[gt_pose.clone()],
                predicted_vertices: Some(&pv),
                gt_vertices: Some(&gv),
                predicted_masks: None,
                gt_masks: None,
            },
        )
        .unwrap();
        assert!(report.mean_vertex_error_mm.unwrap() > 1.0);
    }
}

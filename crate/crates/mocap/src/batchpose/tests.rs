use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detections::{FrameDetections, Joint2d, Joint3d};
use crate::kinematics::{joint_positions, Camera, SkeletonPose, SkeletonRig};
use crate::parallel::Parallelism;
use crate::solver::{check_jacobian, LmOptions, ResidualBlock};

use super::*;

fn cam() -> Camera {
    Camera::new(900.0, 900.0, 320.0, 240.0, 640, 480).unwrap()
}

/// Smooth in-subspace motion: every pose parameter is a combination of the
/// first `k` DCT rows, scaled to stay inside the angle bounds.
pub(super) fn subspace_motion(
    rig: &SkeletonRig,
    frames: usize,
    k: usize,
    seed: u64,
) -> Vec<SkeletonPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dof = rig.pose_dof();
    let rows: Vec<DVector<f64>> = (0..k).map(|r| dct_row(frames, r)).collect();
    let mut trajectories = DMatrix::zeros(dof, frames);
    for p in 0..dof {
        // Center and span per parameter group.
        let (center, span) = if p < 3 {
            let c = [0.0, 0.0, 4.0][p];
            (c, 0.25)
        } else if p < 6 {
            (0.0, 0.15)
        } else {
            let b = &rig.bounds()[p - 6];
            (0.5 * (b.min + b.max), 0.3 * (b.max - b.min))
        };
        let mut traj = DVector::from_element(frames, center);
        // Random low-frequency coefficients, then rescale into the span.
        let mut sum = DVector::zeros(frames);
        for row in rows.iter().skip(1) {
            let c: f64 = rng.random_range(-1.0..1.0);
            sum += row * c;
        }
        let max_dev = sum.amax().max(1e-9);
        traj += sum * (span / max_dev);
        trajectories.set_row(p, &traj.transpose());
    }
    (0..frames)
        .map(|f| SkeletonPose::from_flat(rig, &trajectories.column(f).into_owned()).unwrap())
        .collect()
}

/// Exact detections of a pose: projected joints and root-relative 3D.
pub(super) fn exact_detections(
    rig: &SkeletonRig,
    cam: &Camera,
    pose: &SkeletonPose,
    frame: usize,
) -> FrameDetections {
    let pos = joint_positions(rig, pose).unwrap();
    let mut fd = FrameDetections::empty(frame, rig.joint_count());
    for i in 0..rig.joint_count() {
        fd.joints2d[i] = Joint2d {
            pos: cam.project(&pos[i]).unwrap(),
            confidence: 1.0,
        };
        fd.joints3d[i] = Joint3d {
            pos: pos[i] - pos[0],
            confidence: 1.0,
        };
    }
    fd
}

fn mean_joint_error(rig: &SkeletonRig, a: &[SkeletonPose], b: &[SkeletonPose]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (pa, pb) in a.iter().zip(b.iter()) {
        let ja = joint_positions(rig, pa).unwrap();
        let jb = joint_positions(rig, pb).unwrap();
        for (x, y) in ja.iter().zip(jb.iter()) {
            total += (x - y).norm();
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn energy_d_zero_for_in_subspace_motion() {
    let rig = SkeletonRig::default_humanoid();
    let poses = subspace_motion(&rig, 50, 8, 3);
    let sub = dct_basis(50, 8).unwrap();
    let e = energy_d(&poses, &LambdaWeights::default(), &sub);
    assert!(e < 1e-9, "E_d = {e}");
}

#[test]
fn energy_d_single_out_of_span_row() {
    let rig = SkeletonRig::default_humanoid();
    let frames = 50;
    let sub = dct_basis(frames, 8).unwrap();
    let lambda = LambdaWeights::default();
    // All parameters zero except one angle row set to an out-of-span
    // unit-norm DCT row; E_d = λ² / |B|.
    let row = dct_row(frames, 12);
    let poses: Vec<SkeletonPose> = (0..frames)
        .map(|f| {
            let mut p = SkeletonPose::rest(&rig);
            p.theta[4] = row[f];
            p
        })
        .collect();
    let e = energy_d(&poses, &lambda, &sub);
    let expect = lambda.lambda_theta * lambda.lambda_theta / frames as f64;
    assert_relative_eq!(e, expect, max_relative = 1e-9);
}

#[test]
fn energy_d_matches_least_squares_projection_oracle() {
    // Independent oracle: for each parameter row, fit the best
    // least-squares combination of the basis rows via SVD and measure the
    // residual.
    let rig = SkeletonRig::default_humanoid();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lambda = LambdaWeights::default();
    for trial in 0..100 {
        let frames = rng.random_range(8..40);
        let sub = dct_basis(frames, 8).unwrap();
        let poses: Vec<SkeletonPose> = (0..frames)
            .map(|_| {
                let mut p = SkeletonPose::rest(&rig);
                p.root_t = Vector3::new(rng.random(), rng.random(), rng.random());
                p.root_r = Vector3::new(rng.random(), rng.random(), rng.random());
                for k in 0..rig.angle_count() {
                    p.theta[k] = rng.random_range(-1.0..1.0);
                }
                p
            })
            .collect();
        let e = energy_d(&poses, &lambda, &sub);

        let diag = lambda.diagonal(rig.angle_count());
        let s = pose_matrix(&poses);
        let basis_t = sub.basis.transpose(); // frames × 8
        let svd = basis_t.clone().svd(true, true);
        let mut oracle = 0.0;
        for r in 0..s.nrows() {
            let row = s.row(r).transpose();
            let coeffs = svd.solve(&row, 1e-12).unwrap();
            let resid = &row - &basis_t * coeffs;
            oracle += diag[r] * diag[r] * resid.norm_squared();
        }
        oracle /= frames as f64;
        assert_relative_eq!(e, oracle, max_relative = 1e-9, epsilon = 1e-12);
        let _ = trial;
    }
}

#[test]
fn energy_2d_zero_for_exact_detections_and_345_displacement() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 5;
    let poses = subspace_motion(&rig, frames, 4, 5);
    let dets: Vec<FrameDetections> = poses
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    let x = stack_poses(&poses);

    let mut total = 0.0;
    for f in 0..frames {
        let block = Energy2dBlock::new(&rig, &cam, &dets[f], f, frames);
        total += block.residuals(&x).norm_squared();
    }
    assert!(total < 1e-18, "E_2d = {total}");

    // Displace one joint's detection by (3, 4) pixels: E_2d = 25/(|B|·N_d).
    let mut dets2 = dets.clone();
    dets2[2].joints2d[7].pos += nalgebra::Vector2::new(3.0, 4.0);
    let mut total2 = 0.0;
    for f in 0..frames {
        let block = Energy2dBlock::new(&rig, &cam, &dets2[f], f, frames);
        total2 += block.residuals(&x).norm_squared();
    }
    assert_relative_eq!(total2, 25.0 / (frames as f64 * 16.0), max_relative = 1e-9);
}

#[test]
fn energy_2d_matches_direct_reevaluation_oracle() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 7;
    let poses = subspace_motion(&rig, frames, 5, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dets: Vec<FrameDetections> = (0..frames)
        .map(|f| {
            let mut fd = exact_detections(&rig, &cam, &poses[f], f);
            for j in fd.joints2d.iter_mut() {
                j.pos += nalgebra::Vector2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            }
            fd
        })
        .collect();
    let x = stack_poses(&poses);
    let mut block_total = 0.0;
    for f in 0..frames {
        let block = Energy2dBlock::new(&rig, &cam, &dets[f], f, frames);
        block_total += block.residuals(&x).norm_squared();
    }
    // Direct sum of the formula.
    let mut oracle = 0.0;
    for f in 0..frames {
        let pos = joint_positions(&rig, &poses[f]).unwrap();
        for i in 0..16 {
            let px = cam.project(&pos[i]).unwrap();
            oracle += (px - dets[f].joints2d[i].pos).norm_squared();
        }
    }
    oracle /= (frames * 16) as f64;
    assert_relative_eq!(block_total, oracle, max_relative = 1e-12);
}

#[test]
fn energy_3d_gate_and_offset_values() {
    let rig = SkeletonRig::default_humanoid();
    let frames = 4;
    let poses = subspace_motion(&rig, frames, 4, 13);
    let dets: Vec<FrameDetections> = poses
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam(), p, f))
        .collect();
    let x = stack_poses(&poses);

    // Exact agreement: zero.
    let mut total = 0.0;
    for f in 0..frames {
        let block = Energy3dBlock::new(&rig, &dets[f], f, frames, 1.0);
        total += block.residuals(&x).norm_squared();
    }
    assert!(total < 1e-18);

    // Gated out: zero regardless of the poses.
    let other = subspace_motion(&rig, frames, 4, 14);
    let xo = stack_poses(&other);
    for f in 0..frames {
        let block = Energy3dBlock::new(&rig, &dets[f], f, frames, 0.0);
        assert_eq!(block.residuals(&xo).norm_squared(), 0.0);
    }

    // One joint off by 10 cm in z: 0.01/(|B|·N_d).
    let mut dets2 = dets.clone();
    dets2[1].joints3d[5].pos.z += 0.1;
    let mut total2 = 0.0;
    for f in 0..frames {
        let block = Energy3dBlock::new(&rig, &dets2[f], f, frames, 1.0);
        total2 += block.residuals(&x).norm_squared();
    }
    assert_relative_eq!(total2, 0.01 / (frames as f64 * 16.0), max_relative = 1e-9);
}

#[test]
fn analytic_jacobians_pass_the_checker() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 3;
    let poses = subspace_motion(&rig, frames, 3, 17);
    let dets: Vec<FrameDetections> = poses
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    let x = stack_poses(&poses);
    let sub = dct_basis(frames, 3).unwrap();

    for f in 0..frames {
        let e2d = Energy2dBlock::new(&rig, &cam, &dets[f], f, frames);
        assert!(check_jacobian(&e2d, &x, 1e-6) < 1e-4);
        let e3d = Energy3dBlock::new(&rig, &dets[f], f, frames, 1.0);
        assert!(check_jacobian(&e3d, &x, 1e-6) < 1e-4);
    }
    for row in [0usize, 3, 8, 32] {
        let ed = EdRowBlock::new(row, rig.pose_dof(), &sub, 600.0);
        assert!(check_jacobian(&ed, &x, 1e-6) < 1e-6);
    }
}

#[test]
fn init_recovers_noise_free_pose_to_a_millimeter() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let poses = subspace_motion(&rig, 3, 3, 23);
    let dets: Vec<FrameDetections> = poses
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    let mut opts = LmOptions::default();
    opts.max_iters = 200;
    let (init, outcomes) = init_poses(&dets, &rig, &cam, 0.1, None, &opts, Parallelism::Sequential).unwrap();
    assert!(outcomes.iter().all(|o| *o == InitOutcome::Solved));
    let err = mean_joint_error(&rig, &init, &poses);
    assert!(err < 1e-3, "mean joint error {err} m");
}

#[test]
fn init_without_data_returns_rest_pose_flagged() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let dets = vec![FrameDetections::empty(0, rig.joint_count())];
    let (init, outcomes) =
        init_poses(&dets, &rig, &cam, 0.1, None, &LmOptions::default(), Parallelism::Sequential).unwrap();
    assert_eq!(outcomes[0], InitOutcome::NoData);
    assert_eq!(init[0], SkeletonPose::rest(&rig));
}

#[test]
fn init_is_deterministic_for_identical_frames() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let pose = &subspace_motion(&rig, 8, 4, 29)[4];
    let fd = exact_detections(&rig, &cam, pose, 0);
    let mut f1 = fd.clone();
    f1.frame = 1;
    let dets = vec![fd, f1];
    let (init, _) =
        init_poses(&dets, &rig, &cam, 0.1, None, &LmOptions::default(), Parallelism::Sequential).unwrap();
    assert_eq!(init[0], init[1]);
}

#[test]
fn batch_solve_tightens_noise_free_subspace_motion() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 20;
    let truth = subspace_motion(&rig, frames, 8, 31);
    let dets: Vec<FrameDetections> = truth
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    let mut opts = LmOptions::default();
    opts.max_iters = 150;
    let (init, _) = init_poses(&dets, &rig, &cam, 0.1, None, &opts, Parallelism::Sequential).unwrap();
    let init_err = mean_joint_error(&rig, &init, &truth);

    let batch = Batch {
        f_start: 0,
        f_end: frames - 1,
        poses: init.clone(),
        weights: vec![1.0; frames],
    };
    let (solved, report) = optimize_batch(
        &batch,
        &dets,
        &rig,
        &cam,
        BatchWeights::default(),
        &LambdaWeights::default(),
        8,
        &opts,
    )
    .unwrap();
    let final_err = mean_joint_error(&rig, &solved.poses, &truth);
    assert!(final_err <= init_err + 1e-9, "{final_err} vs {init_err}");

    let sub = dct_basis(frames, 8).unwrap();
    let ed_init = energy_d(&init, &LambdaWeights::default(), &sub);
    let ed_final = energy_d(&solved.poses, &LambdaWeights::default(), &sub);
    assert!(ed_final < ed_init, "E_d {ed_final} vs {ed_init}");
    assert!(report.final_objective <= report.initial_objective);
    for p in &solved.poses {
        assert!(p.within_bounds(&rig, 0.0));
    }
}

#[test]
fn gated_corrupt_frame_is_pulled_toward_the_subspace() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 16;
    let truth = subspace_motion(&rig, frames, 6, 37);
    let mut dets: Vec<FrameDetections> = truth
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    // Corrupt one frame's 3D detections badly; its gate is zero.
    let bad = 7usize;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for j in dets[bad].joints3d.iter_mut() {
        j.pos += Vector3::new(
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
        );
    }
    // Also corrupt its 2D slightly and start the frame from a perturbed
    // init so there is a deviation to reduce.
    let mut init = truth.clone();
    init[bad].theta[3] += 0.4;
    init[bad].root_t.z += 0.2;

    let mut weights = vec![1.0; frames];
    weights[bad] = 0.0;
    let batch = Batch {
        f_start: 0,
        f_end: frames - 1,
        poses: init.clone(),
        weights,
    };
    let sub = dct_basis(frames, 8).unwrap();
    let lambda = LambdaWeights::default();
    let before = frame_subspace_deviation(&init, &lambda, &sub, bad);
    let (solved, _) = optimize_batch(
        &batch,
        &dets,
        &rig,
        &cam,
        BatchWeights::default(),
        &lambda,
        8,
        &LmOptions::default(),
    )
    .unwrap();
    let after = frame_subspace_deviation(&solved.poses, &lambda, &sub, bad);
    assert!(after < before, "deviation {after} vs {before}");
}

#[test]
fn batch_solve_with_zero_regularizer_keeps_per_frame_optimum() {
    let rig = SkeletonRig::default_humanoid();
    let cam = cam();
    let frames = 10;
    let truth = subspace_motion(&rig, frames, 5, 43);
    let dets: Vec<FrameDetections> = truth
        .iter()
        .enumerate()
        .map(|(f, p)| exact_detections(&rig, &cam, p, f))
        .collect();
    let mut opts = LmOptions::default();
    opts.max_iters = 200;
    let (init, _) = init_poses(&dets, &rig, &cam, 0.1, None, &opts, Parallelism::Sequential).unwrap();
    let batch = Batch {
        f_start: 0,
        f_end: frames - 1,
        poses: init.clone(),
        weights: vec![1.0; frames],
    };
    let (solved, _) = optimize_batch(
        &batch,
        &dets,
        &rig,
        &cam,
        BatchWeights { w_3d: 0.1, w_d: 0.0 },
        &LambdaWeights::default(),
        8,
        &opts,
    )
    .unwrap();
    // With the regularizer off the batch objective separates per frame and
    // the init is already optimal: poses stay put within solver tolerance.
    for (a, b) in solved.poses.iter().zip(init.iter()) {
        assert!((a.flatten() - b.flatten()).amax() < 1e-5);
    }
}

#[test]
fn partition_single_and_two_batch_layouts() {
    assert_eq!(partition(50, 50, 10, 8).unwrap(), vec![(0, 49)]);
    assert_eq!(partition(90, 50, 10, 8).unwrap(), vec![(0, 49), (40, 89)]);
    assert_eq!(
        partition(130, 50, 10, 8).unwrap(),
        vec![(0, 49), (40, 89), (80, 129)]
    );
    // Remainder tail stays at least 8 frames by construction.
    let spans = partition(95, 50, 10, 8).unwrap();
    assert_eq!(spans, vec![(0, 49), (40, 89), (80, 94)]);
    assert!(partition(5, 50, 10, 8).is_err());
}

fn constant_batch(f_start: usize, f_end: usize, rig: &SkeletonRig, fill: f64) -> Batch {
    let n = f_end - f_start + 1;
    let mut pose = SkeletonPose::rest(rig);
    pose.root_t = Vector3::new(fill, 0.0, 4.0);
    for k in 0..rig.angle_count() {
        pose.theta[k] = fill * 0.01;
    }
    Batch {
        f_start,
        f_end,
        poses: vec![pose; n],
        weights: vec![1.0; n],
    }
}

#[test]
fn blend_single_batch_is_identity() {
    let rig = SkeletonRig::default_humanoid();
    let b = constant_batch(0, 49, &rig, 1.0);
    let out = partition_and_blend(50, &[b.clone()]).unwrap();
    assert_eq!(out.len(), 50);
    for (o, p) in out.iter().zip(b.poses.iter()) {
        assert_eq!(o, p);
    }
}

#[test]
fn blend_ramp_arithmetic_over_two_batches() {
    let rig = SkeletonRig::default_humanoid();
    let b0 = constant_batch(0, 49, &rig, 0.0);
    let b1 = constant_batch(40, 89, &rig, 1.0);
    let out = partition_and_blend(90, &[b0.clone(), b1.clone()]).unwrap();
    // Frame 40 carries the full weight of the earlier batch.
    assert_eq!(out[40], b0.poses[40]);
    // Frame 49 carries the full weight of the later batch.
    assert_eq!(out[49], b1.poses[9]);
    // Interior ramp: frame 40 + j blends with weight j/9 toward batch 1.
    for j in 0..10usize {
        let expect = j as f64 / 9.0;
        assert_relative_eq!(out[40 + j].root_t.x, expect, epsilon = 1e-12);
        // Component-wise the blend lies between the two batch values.
        for k in 0..rig.angle_count() {
            let lo = b0.poses[0].theta[k].min(b1.poses[0].theta[k]);
            let hi = b0.poses[0].theta[k].max(b1.poses[0].theta[k]);
            assert!(out[40 + j].theta[k] >= lo - 1e-12 && out[40 + j].theta[k] <= hi + 1e-12);
        }
    }
    // Outside the overlap: bit-identical to the owning batch.
    assert_eq!(out[0], b0.poses[0]);
    assert_eq!(out[39], b0.poses[39]);
    assert_eq!(out[50], b1.poses[10]);
    assert_eq!(out[89], b1.poses[49]);
}

#[test]
fn blend_of_agreeing_batches_is_identity() {
    let rig = SkeletonRig::default_humanoid();
    let poses = subspace_motion(&rig, 90, 8, 47);
    let b0 = Batch {
        f_start: 0,
        f_end: 49,
        poses: poses[0..50].to_vec(),
        weights: vec![1.0; 50],
    };
    let b1 = Batch {
        f_start: 40,
        f_end: 89,
        poses: poses[40..90].to_vec(),
        weights: vec![1.0; 50],
    };
    let out = partition_and_blend(90, &[b0, b1]).unwrap();
    for (o, p) in out.iter().zip(poses.iter()) {
        assert_eq!(o, p);
    }
}

#[test]
fn blend_rejects_coverage_gap() {
    let rig = SkeletonRig::default_humanoid();
    let b0 = constant_batch(0, 49, &rig, 0.0);
    let b1 = constant_batch(60, 89, &rig, 1.0);
    assert!(partition_and_blend(90, &[b0, b1]).is_err());
}

use nalgebra::{Quaternion, Vector3};

use crate::math::{
    quat_about_axis, quat_about_axis_deriv, quat_from_axis_angle, quat_from_axis_angle_jac,
    rotate, rotate_jac_q,
};
use crate::{Error, Result};

use super::{SkeletonPose, SkeletonRig};

/// A rigid transform as a unit quaternion plus translation. The joint
/// position is the translation component.
#[derive(Debug, Clone, Copy)]
pub struct JointTransform {
    pub rot: Quaternion<f64>,
    pub trans: Vector3<f64>,
}

impl JointTransform {
    pub fn identity() -> Self {
        Self {
            rot: Quaternion::new(1.0, 0.0, 0.0, 0.0),
            trans: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        rotate(&self.rot, p) + self.trans
    }

    pub fn position(&self) -> Vector3<f64> {
        self.trans
    }

    /// Inverse of a unit-quaternion rigid transform.
    pub fn inverse(&self) -> Self {
        let rc = self.rot.conjugate();
        Self {
            rot: rc,
            trans: -rotate(&rc, &self.trans),
        }
    }
}

fn check_dims(rig: &SkeletonRig, pose: &SkeletonPose) -> Result<()> {
    if pose.theta.len() != rig.angle_count() {
        return Err(Error::DimensionMismatch(format!(
            "pose has {} angles, rig expects {}",
            pose.theta.len(),
            rig.angle_count()
        )));
    }
    Ok(())
}

/// Forward kinematics: world (camera-space) rigid transforms for every
/// joint. A joint's world transform is
/// `parent ∘ translate(offset) ∘ rot(axis_1, θ_1) ∘ …`, with the root's
/// parent being the global `translate(t) ∘ rot(R)`.
pub fn forward_kinematics(rig: &SkeletonRig, pose: &SkeletonPose) -> Result<Vec<JointTransform>> {
    check_dims(rig, pose)?;
    let global = JointTransform {
        rot: quat_from_axis_angle(&pose.root_r),
        trans: pose.root_t,
    };
    let mut out: Vec<JointTransform> = Vec::with_capacity(rig.joint_count());
    for (i, joint) in rig.joints().iter().enumerate() {
        let parent = match joint.parent {
            Some(p) => out[p],
            None => global,
        };
        let trans = parent.trans + rotate(&parent.rot, &joint.offset);
        let mut rot = parent.rot;
        let base = rig.angle_offset(i);
        for (k, axis) in joint.axes.iter().enumerate() {
            rot *= quat_about_axis(axis, pose.theta[base + k]);
        }
        out.push(JointTransform { rot, trans });
    }
    Ok(out)
}

/// Convenience accessor: world joint positions.
pub fn joint_positions(rig: &SkeletonRig, pose: &SkeletonPose) -> Result<Vec<Vector3<f64>>> {
    Ok(forward_kinematics(rig, pose)?
        .iter()
        .map(|t| t.position())
        .collect())
}

/// Forward kinematics together with the derivative of every joint transform
/// with respect to the flattened pose parameters `(t, R, theta)`.
///
/// Derivatives are stored sparsely: `params[i]` lists the (ascending) pose
/// parameter indices that influence joint `i`, with `drot[i]` / `dtrans[i]`
/// aligned to it.
#[derive(Debug, Clone)]
pub struct FkJacobian {
    pub transforms: Vec<JointTransform>,
    pub params: Vec<Vec<usize>>,
    pub drot: Vec<Vec<Quaternion<f64>>>,
    pub dtrans: Vec<Vec<Vector3<f64>>>,
}

impl FkJacobian {
    /// Dense position Jacobian rows (3 × pose_dof) for one joint.
    pub fn position_jacobian(&self, joint: usize, dof: usize) -> nalgebra::DMatrix<f64> {
        let mut j = nalgebra::DMatrix::zeros(3, dof);
        for (slot, &p) in self.params[joint].iter().enumerate() {
            j.column_mut(p).copy_from(&self.dtrans[joint][slot]);
        }
        j
    }
}

pub fn forward_kinematics_with_jacobian(
    rig: &SkeletonRig,
    pose: &SkeletonPose,
) -> Result<FkJacobian> {
    check_dims(rig, pose)?;
    let zero_q = Quaternion::new(0.0, 0.0, 0.0, 0.0);

    let (global_q, global_q_jac) = quat_from_axis_angle_jac(&pose.root_r);
    let n = rig.joint_count();
    let mut transforms: Vec<JointTransform> = Vec::with_capacity(n);
    let mut params: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut drot: Vec<Vec<Quaternion<f64>>> = Vec::with_capacity(n);
    let mut dtrans: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(n);

    for (i, joint) in rig.joints().iter().enumerate() {
        // Parent state: the global transform for the root.
        let (p_rot, p_trans, p_params, p_drot, p_dtrans): (
            Quaternion<f64>,
            Vector3<f64>,
            Vec<usize>,
            Vec<Quaternion<f64>>,
            Vec<Vector3<f64>>,
        ) = match joint.parent {
            Some(p) => (
                transforms[p].rot,
                transforms[p].trans,
                params[p].clone(),
                drot[p].clone(),
                dtrans[p].clone(),
            ),
            None => {
                let ids = vec![0, 1, 2, 3, 4, 5];
                let mut dq = vec![zero_q; 6];
                let mut dt = vec![Vector3::zeros(); 6];
                for c in 0..3 {
                    dt[c] = Vector3::ith(c, 1.0);
                    dq[3 + c] = global_q_jac[c];
                }
                (global_q, pose.root_t, ids, dq, dt)
            }
        };

        // Translation: t = t_p + rot(q_p, offset).
        let rot_off_jac = rotate_jac_q(&p_rot, &joint.offset);
        let trans = p_trans + rotate(&p_rot, &joint.offset);
        let mut my_params = p_params;
        let mut my_dtrans: Vec<Vector3<f64>> = Vec::with_capacity(my_params.len() + 3);
        let mut my_drot: Vec<Quaternion<f64>> = Vec::with_capacity(my_params.len() + 3);
        for slot in 0..my_params.len() {
            let dq = p_drot[slot];
            let mut dt = p_dtrans[slot];
            for c in 0..4 {
                dt += rot_off_jac[c] * dq[c];
            }
            my_dtrans.push(dt);
            my_drot.push(dq); // updated to dq ⊗ local below
        }

        // Rotation: q = q_p ⊗ q(a_1, θ_1) ⊗ … with product-rule updates.
        let mut rot = p_rot;
        let base = rig.angle_offset(i);
        for (k, axis) in joint.axes.iter().enumerate() {
            let theta = pose.theta[base + k];
            let q_axis = quat_about_axis(axis, theta);
            for d in my_drot.iter_mut() {
                *d *= q_axis;
            }
            // The new angle's own derivative.
            my_params.push(6 + base + k);
            my_drot.push(rot * quat_about_axis_deriv(axis, theta));
            my_dtrans.push(Vector3::zeros());
            rot *= q_axis;
        }

        transforms.push(JointTransform { rot, trans });
        params.push(my_params);
        drot.push(my_drot);
        dtrans.push(my_dtrans);
    }

    Ok(FkJacobian {
        transforms,
        params,
        drot,
        dtrans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{AngleBound, Joint};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_joint_chain() -> SkeletonRig {
        SkeletonRig::new(
            vec![
                Joint {
                    name: "root".into(),
                    parent: None,
                    offset: Vector3::zeros(),
                    axes: vec![Vector3::z()],
                },
                Joint {
                    name: "child".into(),
                    parent: Some(0),
                    offset: Vector3::new(0.0, 1.0, 0.0),
                    axes: vec![],
                },
            ],
            vec![AngleBound { min: -3.2, max: 3.2 }],
        )
        .unwrap()
    }

    #[test]
    fn zero_pose_accumulates_rest_offsets() {
        let rig = SkeletonRig::default_humanoid();
        let pose = SkeletonPose::rest(&rig);
        let pos = joint_positions(&rig, &pose).unwrap();
        for (i, joint) in rig.joints().iter().enumerate() {
            // Accumulate offsets root-to-leaf, matching the FK summation
            // order so the comparison is exact.
            let mut chain = Vec::new();
            let mut cur = Some(i);
            while let Some(j) = cur {
                chain.push(j);
                cur = rig.joints()[j].parent;
            }
            chain.reverse();
            let mut expect = Vector3::zeros();
            for j in chain {
                expect += rig.joints()[j].offset;
            }
            assert_eq!(pos[i], expect, "joint {}", joint.name);
        }
    }

    #[test]
    fn translation_shifts_every_joint() {
        let rig = SkeletonRig::default_humanoid();
        let mut pose = SkeletonPose::rest(&rig);
        let base = joint_positions(&rig, &pose).unwrap();
        pose.root_t = Vector3::new(1.0, 2.0, 3.0);
        let shifted = joint_positions(&rig, &pose).unwrap();
        for i in 0..rig.joint_count() {
            assert_eq!(shifted[i], base[i] + Vector3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn chain_rotation_matches_hand_composed_matrices() {
        // Root carries a single z-axis angle of pi/2; the child offset
        // (0, 1, 0) must end up rotated by an explicit 2D rotation.
        let rig = two_joint_chain();
        let mut pose = SkeletonPose::rest(&rig);
        pose.theta[0] = std::f64::consts::FRAC_PI_2;
        let pos = joint_positions(&rig, &pose).unwrap();
        let expect = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Vector3::z_axis(),
            std::f64::consts::FRAC_PI_2,
        ) * Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!((pos[1] - expect).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!((pos[1] - Vector3::new(-1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let rig = SkeletonRig::default_humanoid();
        let pose = SkeletonPose {
            root_t: Vector3::zeros(),
            root_r: Vector3::zeros(),
            theta: nalgebra::DVector::zeros(5),
        };
        assert!(matches!(
            forward_kinematics(&rig, &pose),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn random_pose(rig: &SkeletonRig, seed: u64) -> SkeletonPose {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pose = SkeletonPose::rest(rig);
        pose.root_t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(2.0..4.0),
        );
        pose.root_r = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        for (k, b) in rig.bounds().iter().enumerate() {
            pose.theta[k] = rng.random_range(b.min..b.max);
        }
        pose
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let rig = SkeletonRig::default_humanoid();
        for seed in 0..4u64 {
            let pose = random_pose(&rig, seed);
            let fk = forward_kinematics_with_jacobian(&rig, &pose).unwrap();
            let x0 = pose.flatten();
            let eps = 1e-6;
            for joint in [1usize, 4, 7, 11, 15] {
                let dense = fk.position_jacobian(joint, rig.pose_dof());
                for p in 0..rig.pose_dof() {
                    let mut xp = x0.clone();
                    let mut xm = x0.clone();
                    xp[p] += eps;
                    xm[p] -= eps;
                    let pp = SkeletonPose::from_flat(&rig, &xp).unwrap();
                    let pm = SkeletonPose::from_flat(&rig, &xm).unwrap();
                    let fd = (joint_positions(&rig, &pp).unwrap()[joint]
                        - joint_positions(&rig, &pm).unwrap()[joint])
                        / (2.0 * eps);
                    for c in 0..3 {
                        assert_relative_eq!(dense[(c, p)], fd[c], epsilon = 1e-6, max_relative = 1e-5);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn translation_equivariance(dx in -5.0f64..5.0, dy in -5.0f64..5.0, dz in -5.0f64..5.0, seed in 0u64..32) {
            let rig = SkeletonRig::default_humanoid();
            let mut pose = random_pose(&rig, seed);
            let before = joint_positions(&rig, &pose).unwrap();
            let delta = Vector3::new(dx, dy, dz);
            pose.root_t += delta;
            let after = joint_positions(&rig, &pose).unwrap();
            for i in 0..rig.joint_count() {
                prop_assert!((after[i] - before[i] - delta).norm() < 1e-12);
            }
        }

        #[test]
        fn bone_length_constancy(seed in 0u64..64) {
            let rig = SkeletonRig::default_humanoid();
            let pose = random_pose(&rig, seed);
            let pos = joint_positions(&rig, &pose).unwrap();
            for (i, joint) in rig.joints().iter().enumerate() {
                if let Some(p) = joint.parent {
                    let len = (pos[i] - pos[p]).norm();
                    prop_assert!((len - rig.bone_length(i)).abs() < 1e-9);
                }
            }
        }
    }
}

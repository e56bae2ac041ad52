use nalgebra::{Quaternion, Vector3};

use crate::math::{rotate, rotate_jac_q};
use crate::Result;

use super::{
    forward_kinematics, forward_kinematics_with_jacobian, ActorTemplate, DualQuat, JointTransform,
    SkeletonPose, SkeletonRig,
};

/// Per-joint skinning transforms `world(pose) ∘ world(rest)⁻¹` as dual
/// quaternions.
fn bone_dual_quats(rig: &SkeletonRig, pose: &SkeletonPose) -> Result<Vec<DualQuat>> {
    let world = forward_kinematics(rig, pose)?;
    let rest = forward_kinematics(rig, &SkeletonPose::rest(rig))?;
    Ok(world
        .iter()
        .zip(rest.iter())
        .map(|(w, r)| {
            let rot = w.rot * r.rot.conjugate();
            let trans = w.trans - rotate(&rot, &r.trans);
            DualQuat::from_rigid(&JointTransform { rot, trans })
        })
        .collect())
}

fn blend_vertex(dqs: &[DualQuat], weights: &[(usize, f64)], v: &Vector3<f64>) -> Vector3<f64> {
    // Hemisphere reference: the largest-weight bone.
    let reference = weights
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|&(j, _)| j)
        .unwrap_or(0);
    let ref_real = dqs[reference].real;
    let mut blend = DualQuat::zero();
    for &(joint, w) in weights {
        if w == 0.0 {
            continue;
        }
        let dq = &dqs[joint];
        let sign = if dq.real.dot(&ref_real) < 0.0 { -w } else { w };
        blend = blend.add(&dq.scaled(sign));
    }
    blend.transform_point(v)
}

/// Dual quaternion skinning of the whole template.
pub fn skin_mesh(
    template: &ActorTemplate,
    rig: &SkeletonRig,
    pose: &SkeletonPose,
) -> Result<Vec<Vector3<f64>>> {
    let dqs = bone_dual_quats(rig, pose)?;
    Ok(template
        .vertices
        .iter()
        .zip(template.skin_weights.iter())
        .map(|(v, w)| blend_vertex(&dqs, w, v))
        .collect())
}

/// Skins only the requested vertices.
pub fn skin_vertices(
    template: &ActorTemplate,
    rig: &SkeletonRig,
    pose: &SkeletonPose,
    ids: &[usize],
) -> Result<Vec<Vector3<f64>>> {
    let dqs = bone_dual_quats(rig, pose)?;
    Ok(ids
        .iter()
        .map(|&k| blend_vertex(&dqs, &template.skin_weights[k], &template.vertices[k]))
        .collect())
}

/// Skinned positions of selected vertices together with sparse derivatives
/// with respect to the flattened pose parameters.
#[derive(Debug, Clone)]
pub struct SkinJacobian {
    pub positions: Vec<Vector3<f64>>,
    /// Per requested vertex: `(pose parameter index, d position / d param)`.
    pub jac: Vec<Vec<(usize, Vector3<f64>)>>,
}

/// Like [`skin_vertices`] but also returns analytic derivatives, used by the
/// silhouette alignment residuals. Hemisphere flips are held fixed at the
/// evaluation point.
pub fn skin_vertices_with_jacobian(
    template: &ActorTemplate,
    rig: &SkeletonRig,
    pose: &SkeletonPose,
    ids: &[usize],
) -> Result<SkinJacobian> {
    let fk = forward_kinematics_with_jacobian(rig, pose)?;
    let rest = forward_kinematics(rig, &SkeletonPose::rest(rig))?;
    let n_joints = rig.joint_count();

    // Skinning dual quaternion and its derivative per joint.
    let mut dqs = Vec::with_capacity(n_joints);
    let mut ddqs: Vec<Vec<DualQuat>> = Vec::with_capacity(n_joints);
    for j in 0..n_joints {
        let rq_conj = rest[j].rot.conjugate();
        let srot = fk.transforms[j].rot * rq_conj;
        let rot_jac = rotate_jac_q(&srot, &rest[j].trans);
        let strans = fk.transforms[j].trans - rotate(&srot, &rest[j].trans);
        dqs.push(DualQuat::from_rigid(&JointTransform {
            rot: srot,
            trans: strans,
        }));
        let mut per_param = Vec::with_capacity(fk.params[j].len());
        for slot in 0..fk.params[j].len() {
            let dsrot = fk.drot[j][slot] * rq_conj;
            let mut dstrans = fk.dtrans[j][slot];
            for c in 0..4 {
                dstrans -= rot_jac[c] * dsrot[c];
            }
            // d dual = 1/2 [(0, dt) ⊗ q + (0, t) ⊗ dq]
            let ddual = (Quaternion::from_imag(dstrans) * srot
                + Quaternion::from_imag(strans) * dsrot)
                * 0.5;
            per_param.push(DualQuat {
                real: dsrot,
                dual: ddual,
            });
        }
        ddqs.push(per_param);
    }

    let mut positions = Vec::with_capacity(ids.len());
    let mut jac = Vec::with_capacity(ids.len());
    for &vid in ids {
        let weights = &template.skin_weights[vid];
        let v = &template.vertices[vid];
        let reference = weights
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|&(j, _)| j)
            .unwrap_or(0);
        let ref_real = dqs[reference].real;

        // Blend value and parameter set.
        let mut blend = DualQuat::zero();
        let mut active: Vec<usize> = Vec::new();
        for &(joint, w) in weights {
            if w == 0.0 {
                continue;
            }
            let sign = if dqs[joint].real.dot(&ref_real) < 0.0 { -w } else { w };
            blend = blend.add(&dqs[joint].scaled(sign));
            for &p in &fk.params[joint] {
                if let Err(pos) = active.binary_search(&p) {
                    active.insert(pos, p);
                }
            }
        }

        // Blend derivative per active parameter.
        let mut dblend = vec![DualQuat::zero(); active.len()];
        for &(joint, w) in weights {
            if w == 0.0 {
                continue;
            }
            let sign = if dqs[joint].real.dot(&ref_real) < 0.0 { -w } else { w };
            for (slot, &p) in fk.params[joint].iter().enumerate() {
                let at = active.binary_search(&p).unwrap();
                dblend[at] = dblend[at].add(&ddqs[joint][slot].scaled(sign));
            }
        }

        // v = N / u with N = rot(r, v̂) + 2 vec(d ⊗ r*), u = ⟨r, r⟩.
        let r = blend.real;
        let d = blend.dual;
        let u = r.dot(&r);
        let n_vec = rotate(&r, v) + (d * r.conjugate()).imag() * 2.0;
        positions.push(n_vec / u);

        let rot_jac = rotate_jac_q(&r, v);
        let mut rows = Vec::with_capacity(active.len());
        for (slot, &p) in active.iter().enumerate() {
            let dr = dblend[slot].real;
            let dd = dblend[slot].dual;
            let mut dn = (dd * r.conjugate() + d * dr.conjugate()).imag() * 2.0;
            for c in 0..4 {
                dn += rot_jac[c] * dr[c];
            }
            let du = 2.0 * r.dot(&dr);
            rows.push((p, (dn * u - n_vec * du) / (u * u)));
        }
        jac.push(rows);
    }

    Ok(SkinJacobian { positions, jac })
}

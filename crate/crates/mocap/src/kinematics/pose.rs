use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::SkeletonRig;

/// Per-frame skeleton parameters: root translation (camera space, meters),
/// root rotation as an axis-angle vector, and one angle per rig axis.
/// Flattened order is `(t, R, theta)`; 33 entries for the default rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPose {
    pub root_t: Vector3<f64>,
    pub root_r: Vector3<f64>,
    pub theta: DVector<f64>,
}

impl SkeletonPose {
    /// The rest pose: zero translation, identity rotation, zero angles.
    pub fn rest(rig: &SkeletonRig) -> Self {
        Self {
            root_t: Vector3::zeros(),
            root_r: Vector3::zeros(),
            theta: DVector::zeros(rig.angle_count()),
        }
    }

    pub fn dof(&self) -> usize {
        6 + self.theta.len()
    }

    /// Flattens to `(t, R, theta)`.
    pub fn flatten(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dof());
        v.fixed_rows_mut::<3>(0).copy_from(&self.root_t);
        v.fixed_rows_mut::<3>(3).copy_from(&self.root_r);
        v.rows_mut(6, self.theta.len()).copy_from(&self.theta);
        v
    }

    pub fn from_flat(rig: &SkeletonRig, v: &DVector<f64>) -> Result<Self> {
        if v.len() != rig.pose_dof() {
            return Err(Error::DimensionMismatch(format!(
                "pose vector has {} entries, rig expects {}",
                v.len(),
                rig.pose_dof()
            )));
        }
        Ok(Self {
            root_t: Vector3::new(v[0], v[1], v[2]),
            root_r: Vector3::new(v[3], v[4], v[5]),
            theta: v.rows(6, v.len() - 6).into_owned(),
        })
    }

    /// Clamps every angle into the rig's bounds.
    pub fn clamp_to_bounds(&mut self, rig: &SkeletonRig) {
        for (k, b) in rig.bounds().iter().enumerate() {
            self.theta[k] = self.theta[k].clamp(b.min, b.max);
        }
    }

    /// True if every angle lies within its bound (with slack `tol`).
    pub fn within_bounds(&self, rig: &SkeletonRig, tol: f64) -> bool {
        rig.bounds()
            .iter()
            .enumerate()
            .all(|(k, b)| self.theta[k] >= b.min - tol && self.theta[k] <= b.max + tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let rig = SkeletonRig::default_humanoid();
        let mut pose = SkeletonPose::rest(&rig);
        pose.root_t = Vector3::new(1.0, 2.0, 3.0);
        pose.root_r = Vector3::new(0.1, -0.2, 0.3);
        pose.theta[5] = 0.7;
        let flat = pose.flatten();
        assert_eq!(flat.len(), 33);
        let back = SkeletonPose::from_flat(&rig, &flat).unwrap();
        assert_eq!(back, pose);
    }

    #[test]
    fn from_flat_rejects_wrong_length() {
        let rig = SkeletonRig::default_humanoid();
        let v = DVector::zeros(10);
        assert!(SkeletonPose::from_flat(&rig, &v).is_err());
    }
}

use nalgebra::{Quaternion, Vector3};

use crate::math::rotate;

use super::JointTransform;

/// Dual quaternion: rotation in the real part, translation folded into the
/// dual part. Blends of unit dual quaternions are applied through the
/// rational form in [`DualQuat::transform_point`], which normalizes
/// implicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuat {
    pub real: Quaternion<f64>,
    pub dual: Quaternion<f64>,
}

impl DualQuat {
    pub fn identity() -> Self {
        Self {
            real: Quaternion::new(1.0, 0.0, 0.0, 0.0),
            dual: Quaternion::new(0.0, 0.0, 0.0, 0.0),
        }
    }

    pub fn zero() -> Self {
        Self {
            real: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            dual: Quaternion::new(0.0, 0.0, 0.0, 0.0),
        }
    }

    /// Unit dual quaternion of a rigid transform: `dual = 1/2 (0, t) ⊗ r`.
    pub fn from_rigid(t: &JointTransform) -> Self {
        let pure = Quaternion::from_imag(t.trans);
        Self {
            real: t.rot,
            dual: pure * t.rot * 0.5,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            real: self.real * s,
            dual: self.dual * s,
        }
    }

    pub fn add(&self, other: &DualQuat) -> Self {
        Self {
            real: self.real + other.real,
            dual: self.dual + other.dual,
        }
    }

    /// Applies the rigid transform of the *normalized* dual quaternion to a
    /// point without forming the normalization explicitly:
    /// `v = [q (0, v̂) q* + 2 vec(d ⊗ q*)] / ⟨q, q⟩`.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let u = self.real.dot(&self.real);
        let n = rotate(&self.real, p) + (self.dual * self.real.conjugate()).imag() * 2.0;
        n / u
    }
}

//! Rotation and quaternion helpers shared by kinematics, blending and the
//! deformation graph.
//!
//! All rotations in the crate flow through quaternions. Derivatives are
//! propagated with respect to raw quaternion components (order `[i, j, k, w]`
//! matching `nalgebra`'s coordinate layout), which keeps the chain rule a
//! sequence of bilinear quaternion products.

use nalgebra::{Matrix3, Quaternion, Vector3};

/// Threshold below which axis-angle formulas switch to their series
/// expansions.
const SMALL_ANGLE: f64 = 1e-7;

/// Unit quaternion for a rotation of `angle` radians about a unit `axis`.
pub fn quat_about_axis(axis: &Vector3<f64>, angle: f64) -> Quaternion<f64> {
    let (s, c) = (0.5 * angle).sin_cos();
    Quaternion::new(c, s * axis.x, s * axis.y, s * axis.z)
}

/// Derivative of [`quat_about_axis`] with respect to the angle.
pub fn quat_about_axis_deriv(axis: &Vector3<f64>, angle: f64) -> Quaternion<f64> {
    let (s, c) = (0.5 * angle).sin_cos();
    Quaternion::new(-0.5 * s, 0.5 * c * axis.x, 0.5 * c * axis.y, 0.5 * c * axis.z)
}

/// Exponential map: axis-angle vector to unit quaternion.
pub fn quat_from_axis_angle(r: &Vector3<f64>) -> Quaternion<f64> {
    let theta = r.norm();
    if theta < SMALL_ANGLE {
        // sin(t/2)/t = 1/2 - t^2/48 + O(t^4)
        let k = 0.5 - theta * theta / 48.0;
        Quaternion::new(1.0 - theta * theta / 8.0, k * r.x, k * r.y, k * r.z)
    } else {
        let (s, c) = (0.5 * theta).sin_cos();
        let k = s / theta;
        Quaternion::new(c, k * r.x, k * r.y, k * r.z)
    }
}

/// Exponential map together with the Jacobian of the quaternion components
/// with respect to the axis-angle vector. `jac[c]` is the derivative with
/// respect to `r[c]`.
pub fn quat_from_axis_angle_jac(r: &Vector3<f64>) -> (Quaternion<f64>, [Quaternion<f64>; 3]) {
    let theta2 = r.norm_squared();
    let theta = theta2.sqrt();
    let q = quat_from_axis_angle(r);
    let mut jac = [Quaternion::new(0.0, 0.0, 0.0, 0.0); 3];
    if theta < SMALL_ANGLE {
        // d w / d r_c = -r_c/4, d v_i / d r_c = delta_ic/2 - (r_i r_c)/24
        for c in 0..3 {
            let mut dq = Quaternion::new(-0.25 * r[c], 0.0, 0.0, 0.0);
            for i in 0..3 {
                let mut v = -r[i] * r[c] / 24.0;
                if i == c {
                    v += 0.5;
                }
                dq[i] = v;
            }
            jac[c] = dq;
        }
    } else {
        let (s, c_half) = (0.5 * theta).sin_cos();
        let k = s / theta;
        // d k / d theta = (cos(t/2)/2 - sin(t/2)/t) / t
        let dk_dtheta = (0.5 * c_half - k) / theta;
        for c in 0..3 {
            let dtheta = r[c] / theta;
            let mut dq = Quaternion::new(-0.5 * s * dtheta, 0.0, 0.0, 0.0);
            for i in 0..3 {
                let mut v = dk_dtheta * dtheta * r[i];
                if i == c {
                    v += k;
                }
                dq[i] = v;
            }
            jac[c] = dq;
        }
    }
    (q, jac)
}

/// Shortest axis-angle vector for a unit quaternion.
pub fn axis_angle_from_quat(q: &Quaternion<f64>) -> Vector3<f64> {
    let q = if q.w < 0.0 { -*q } else { *q };
    let vn = q.imag().norm();
    if vn < SMALL_ANGLE {
        // theta/ sin(theta/2) -> 2 as theta -> 0
        q.imag() * 2.0
    } else {
        let theta = 2.0 * vn.atan2(q.w);
        q.imag() * (theta / vn)
    }
}

/// Rotates `v` by the quadratic form `q (0, v) q*`. For a unit quaternion
/// this is the usual rotation; for a non-unit quaternion the result scales
/// by `|q|^2`, which is exactly what the dual quaternion blend relies on.
pub fn rotate(q: &Quaternion<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let p = Quaternion::from_imag(*v);
    (q * p * q.conjugate()).imag()
}

/// Derivative of [`rotate`] with respect to the four quaternion components
/// (order `[i, j, k, w]`).
pub fn rotate_jac_q(q: &Quaternion<f64>, v: &Vector3<f64>) -> [Vector3<f64>; 4] {
    let p = Quaternion::from_imag(*v);
    let qc = q.conjugate();
    let mut out = [Vector3::zeros(); 4];
    for c in 0..4 {
        let mut e = Quaternion::new(0.0, 0.0, 0.0, 0.0);
        e[c] = 1.0;
        out[c] = (e * p * qc + q * p * e.conjugate()).imag();
    }
    out
}

/// Rotation matrix of an axis-angle vector.
pub fn rotation_from_axis_angle(r: &Vector3<f64>) -> Matrix3<f64> {
    let q = quat_from_axis_angle(r);
    let mut m = Matrix3::zeros();
    for c in 0..3 {
        let col = rotate(&q, &Vector3::ith(c, 1.0));
        m.set_column(c, &col);
    }
    m
}

/// Rotates `x` by the axis-angle vector `phi` and returns the derivative
/// of the rotated point with respect to `phi` (columns are d/dφ_c).
pub fn rotate_axis_angle_jac(phi: &Vector3<f64>, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let (q, dq) = quat_from_axis_angle_jac(phi);
    let value = rotate(&q, x);
    let jq = rotate_jac_q(&q, x);
    let mut jac = Matrix3::zeros();
    for c in 0..3 {
        let mut col = Vector3::zeros();
        for k in 0..4 {
            col += jq[k] * dq[c][k];
        }
        jac.set_column(c, &col);
    }
    (value, jac)
}

/// Shortest-arc spherical interpolation between two unit quaternions.
/// `t = 0` returns `a`; the second quaternion is sign-flipped onto `a`'s
/// hemisphere before interpolating.
pub fn quat_slerp(a: &Quaternion<f64>, b: &Quaternion<f64>, t: f64) -> Quaternion<f64> {
    let mut b = *b;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        // nearly identical: nlerp is exact enough and avoids 0/0
        let q = a * (1.0 - t) + b * t;
        return q.normalize();
    }
    let omega = dot.clamp(-1.0, 1.0).acos();
    let so = omega.sin();
    let wa = ((1.0 - t) * omega).sin() / so;
    let wb = (t * omega).sin() / so;
    a * wa + b * wb
}

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Depth below which a point counts as behind the camera.
pub const EPS_DEPTH: f64 = 1e-6;

/// Pinhole camera: focal lengths and principal point in pixels, plus the
/// image dimensions. The camera frame is the world frame throughout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Full perspective projection `(fx x/z + cx, fy y/z + cy)`.
    /// Errors when the point is at or behind the camera plane.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= EPS_DEPTH {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(self.project_unchecked(p))
    }

    fn project_unchecked(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Projection with the depth clamped to [`EPS_DEPTH`]. Returns the pixel
    /// position and whether clamping fired; used by residuals that must stay
    /// finite while the solver passes through degenerate states.
    pub fn project_clamped(&self, p: &Vector3<f64>) -> (Vector2<f64>, bool) {
        if p.z <= EPS_DEPTH {
            let q = Vector3::new(p.x, p.y, EPS_DEPTH);
            (self.project_unchecked(&q), true)
        } else {
            (self.project_unchecked(p), false)
        }
    }

    /// Jacobian of [`Camera::project_clamped`] with respect to the point.
    /// In the clamped regime the depth column is zero.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let clamped = p.z <= EPS_DEPTH;
        let z = if clamped { EPS_DEPTH } else { p.z };
        let mut j = Matrix2x3::zeros();
        j[(0, 0)] = self.fx / z;
        j[(1, 1)] = self.fy / z;
        if !clamped {
            j[(0, 2)] = -self.fx * p.x / (z * z);
            j[(1, 2)] = -self.fy * p.y / (z * z);
        }
        j
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cam: Camera =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> Camera {
        Camera::new(1000.0, 1000.0, 500.0, 500.0, 1000, 1000).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_center() {
        let p = cam().project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.x, 500.0);
        assert_relative_eq!(p.y, 500.0);
    }

    #[test]
    fn off_axis_point() {
        // fx*x/z + cx = 1000*0.5 + 500
        let p = cam().project(&Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(p.x, 1000.0);
    }

    #[test]
    fn zero_depth_is_an_error() {
        assert!(matches!(
            cam().project(&Vector3::new(0.1, 0.2, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn depth_scaling_invariance() {
        let c = cam();
        let p = Vector3::new(0.3, -0.2, 1.7);
        let a = c.project(&p).unwrap();
        for lambda in [0.5, 2.0, 13.0] {
            let b = c.project(&(p * lambda)).unwrap();
            assert_relative_eq!((a - b).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = cam();
        let p = Vector3::new(0.3, -0.2, 1.7);
        let j = c.project_jacobian(&p);
        let eps = 1e-7;
        for k in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += eps;
            pm[k] -= eps;
            let fd = (c.project(&pp).unwrap() - c.project(&pm).unwrap()) / (2.0 * eps);
            assert_relative_eq!(j[(0, k)], fd.x, epsilon = 1e-5);
            assert_relative_eq!(j[(1, k)], fd.y, epsilon = 1e-5);
        }
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
    }
}

use nalgebra::Vector2;

use crate::kinematics::{forward_kinematics, Camera, SkeletonPose, SkeletonRig};
use crate::Result;

use super::BinaryMask;

/// Distance from a point to a 2D segment.
fn segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Rasterizes the posed skeleton: every bone becomes a thick 2D segment
/// between the projected parent and child joints (pixel centers within
/// `thickness/2`). Bones with an endpoint at or behind the camera are
/// skipped and returned in the second value.
pub fn render_skeleton_mask(
    rig: &SkeletonRig,
    pose: &SkeletonPose,
    cam: &Camera,
    thickness: f64,
) -> Result<(BinaryMask, Vec<usize>)> {
    let transforms = forward_kinematics(rig, pose)?;
    let mut mask = BinaryMask::new(cam.width as usize, cam.height as usize);
    let mut skipped = Vec::new();
    let radius = 0.5 * thickness;
    for (i, joint) in rig.joints().iter().enumerate() {
        let Some(parent) = joint.parent else { continue };
        let pa = transforms[parent].position();
        let pb = transforms[i].position();
        let (Ok(a), Ok(b)) = (cam.project(&pa), cam.project(&pb)) else {
            skipped.push(i);
            continue;
        };
        let min_x = (a.x.min(b.x) - radius).floor().max(0.0) as usize;
        let max_x = ((a.x.max(b.x) + radius).ceil() as i64).min(cam.width as i64 - 1);
        let min_y = (a.y.min(b.y) - radius).floor().max(0.0) as usize;
        let max_y = ((a.y.max(b.y) + radius).ceil() as i64).min(cam.height as i64 - 1);
        if max_x < 0 || max_y < 0 {
            continue;
        }
        for y in min_y..=(max_y as usize) {
            for x in min_x..=(max_x as usize) {
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                if segment_distance(p, a, b) <= radius {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok((mask, skipped))
}

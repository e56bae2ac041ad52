//! Batch partitioning and linear blending across batch overlaps.

use crate::kinematics::SkeletonPose;
use crate::math::{axis_angle_from_quat, quat_from_axis_angle, quat_slerp};
use crate::{Error, Result};

use super::Batch;

/// Splits `[0, num_frames)` into batches of `batch_size` frames with
/// `overlap` shared frames between neighbours; the final batch absorbs the
/// remainder and is extended backward if it would fall below `min_len`
/// (the DCT subspace dimension).
pub fn partition(
    num_frames: usize,
    batch_size: usize,
    overlap: usize,
    min_len: usize,
) -> Result<Vec<(usize, usize)>> {
    if num_frames < min_len {
        return Err(Error::InvalidInput(format!(
            "{num_frames} frames is below the minimum batch length {min_len}"
        )));
    }
    if overlap < 2 || overlap >= batch_size {
        return Err(Error::InvalidConfig(format!(
            "overlap {overlap} must be in [2, batch_size)"
        )));
    }
    let mut spans = Vec::new();
    let mut start = 0usize;
    loop {
        let end = (start + batch_size - 1).min(num_frames - 1);
        spans.push((start, end));
        if end == num_frames - 1 {
            break;
        }
        start = end - (overlap - 1);
    }
    // Keep the tail long enough for the trajectory subspace.
    if let Some(last) = spans.last_mut() {
        if last.1 - last.0 + 1 < min_len {
            last.0 = num_frames - min_len;
        }
    }
    Ok(spans)
}

/// Blends two poses: translation and angles linearly, the root rotation by
/// shortest-arc quaternion interpolation. `t = 0` returns `a`.
pub fn blend_poses(a: &SkeletonPose, b: &SkeletonPose, t: f64) -> SkeletonPose {
    // a + (b − a)·t so that equal inputs reproduce the input bit for bit.
    let root_t = a.root_t + (b.root_t - a.root_t) * t;
    let theta = &a.theta + (&b.theta - &a.theta) * t;
    let root_r = if a.root_r == b.root_r {
        a.root_r
    } else {
        let qa = quat_from_axis_angle(&a.root_r);
        let qb = quat_from_axis_angle(&b.root_r);
        axis_angle_from_quat(&quat_slerp(&qa, &qb, t))
    };
    SkeletonPose { root_t, root_r, theta }
}

/// Combines per-batch results into one pose per frame. Outside overlaps
/// poses are copied bit for bit; inside an overlap of length `L` the weight
/// of the earlier batch ramps linearly `(L−1−j)/(L−1) … 0` over the overlap
/// frames. Batches must cover `[0, num_frames)` in order; a coverage gap is
/// an error.
pub fn partition_and_blend(num_frames: usize, batches: &[Batch]) -> Result<Vec<SkeletonPose>> {
    if batches.is_empty() {
        return Err(Error::InvalidInput("no batches to blend".into()));
    }
    if batches[0].f_start != 0 || batches.last().unwrap().f_end != num_frames - 1 {
        return Err(Error::InvalidInput(format!(
            "batches cover [{}, {}], expected [0, {}]",
            batches[0].f_start,
            batches.last().unwrap().f_end,
            num_frames - 1
        )));
    }
    for w in batches.windows(2) {
        if w[1].f_start > w[0].f_end {
            return Err(Error::InvalidInput(format!(
                "coverage gap between frame {} and {}",
                w[0].f_end, w[1].f_start
            )));
        }
        if w[1].f_end <= w[0].f_end {
            return Err(Error::InvalidInput("batches out of order".into()));
        }
    }
    for w in batches.windows(3) {
        if w[2].f_start <= w[0].f_end {
            return Err(Error::InvalidInput(
                "more than two batches overlap one frame".into(),
            ));
        }
    }

    let mut out: Vec<SkeletonPose> = Vec::with_capacity(num_frames);
    for (bi, batch) in batches.iter().enumerate() {
        let copy_from = batch.f_start + if bi == 0 { 0 } else { batches[bi - 1].f_end - batch.f_start + 1 };
        // Frames shared with the previous batch were already emitted by the
        // blend below; frames shared with the next batch are blended here.
        let blend_start = if bi + 1 < batches.len() {
            batches[bi + 1].f_start
        } else {
            batch.f_end + 1
        };
        for f in copy_from..blend_start.min(batch.f_end + 1) {
            out.push(batch.poses[f - batch.f_start].clone());
        }
        if bi + 1 < batches.len() {
            let next = &batches[bi + 1];
            let l = batch.f_end - next.f_start + 1;
            for j in 0..l {
                let f = next.f_start + j;
                let t_late = if l == 1 { 1.0 } else { j as f64 / (l - 1) as f64 };
                out.push(blend_poses(
                    &batch.poses[f - batch.f_start],
                    &next.poses[f - next.f_start],
                    t_late,
                ));
            }
        }
    }
    if out.len() != num_frames {
        return Err(Error::InvalidInput(format!(
            "blend produced {} frames, expected {num_frames}",
            out.len()
        )));
    }
    Ok(out)
}

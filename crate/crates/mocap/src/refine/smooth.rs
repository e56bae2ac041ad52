use nalgebra::Vector3;

/// Temporal smoothing of per-frame vertex positions: a centered moving
/// average over `window` frames (odd), with the window truncated
/// symmetrically near the sequence ends so constant and linear signals
/// pass through unchanged everywhere.
pub fn temporal_smooth(frames: &[Vec<Vector3<f64>>], window: usize) -> Vec<Vec<Vector3<f64>>> {
    assert!(window % 2 == 1, "window must be odd");
    let n = frames.len();
    if n == 0 {
        return Vec::new();
    }
    let radius = window / 2;
    let vertex_count = frames[0].len();
    let mut out = Vec::with_capacity(n);
    for f in 0..n {
        let r = radius.min(f).min(n - 1 - f);
        let mut frame = vec![Vector3::zeros(); vertex_count];
        for g in f - r..=f + r {
            for (acc, v) in frame.iter_mut().zip(frames[g].iter()) {
                *acc += v;
            }
        }
        let scale = 1.0 / (2 * r + 1) as f64;
        for v in frame.iter_mut() {
            *v *= scale;
        }
        out.push(frame);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_sequence_is_unchanged() {
        let frames = vec![vec![Vector3::new(1.0, 2.0, 3.0); 4]; 9];
        let out = temporal_smooth(&frames, 5);
        for f in &out {
            for v in f {
                assert_relative_eq!((v - Vector3::new(1.0, 2.0, 3.0)).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn impulse_spreads_to_a_fifth_over_the_window() {
        let mut frames = vec![vec![Vector3::zeros(); 1]; 21];
        frames[10][0] = Vector3::new(5.0, 0.0, 0.0);
        let out = temporal_smooth(&frames, 5);
        for f in 0..21 {
            let expect = if (8..=12).contains(&f) { 1.0 } else { 0.0 };
            assert_relative_eq!(out[f][0].x, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_ramp_passes_through() {
        let frames: Vec<Vec<Vector3<f64>>> = (0..15)
            .map(|f| vec![Vector3::new(0.3 * f as f64, -0.1 * f as f64, 2.0)])
            .collect();
        let out = temporal_smooth(&frames, 5);
        // The box filter passes linear signals in the interior, and the
        // symmetric truncation keeps the ends linear too.
        for f in 0..15 {
            assert_relative_eq!(out[f][0].x, 0.3 * f as f64, epsilon = 1e-12);
            assert_relative_eq!(out[f][0].y, -0.1 * f as f64, epsilon = 1e-12);
        }
    }
}

//! Iterated GMM / graph-cut foreground segmentation seeded by a trimap,
//! with the pairwise smoothness strengthened between temporally static
//! neighbours:
//! `B_pq = γ · exp(−β‖c_p − c_q‖²) · (1 + μ · exp(−motion_pq / σ_m))`
//! where `motion_pq` is the larger of the two pixels' motion values. With
//! `μ = 0` the weights reduce bit for bit to the plain contrast term.

use crate::raster::BinaryMask;
use crate::{Error, Result};

use super::{ColorImage, ColorModel, FlowGraph, Trimap, TrimapLabel};

/// Fixed-point scale for graph capacities; keeps cuts deterministic.
const CAP_SCALE: f64 = (1u64 << 24) as f64;
const CAP_INF: i64 = i64::MAX / 8;

#[derive(Debug, Clone, Copy)]
pub struct GrabCutParams {
    /// GMM components per region.
    pub components: usize,
    /// Contrast term strength γ.
    pub gamma: f64,
    /// Iterations of (assign, refit, cut).
    pub iters: usize,
    /// Motion-cue boost μ; 0 disables the extension.
    pub mu: f64,
    /// Motion-cue bandwidth σ_m.
    pub sigma_m: f64,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            components: 5,
            gamma: 50.0,
            iters: 5,
            mu: 1.0,
            sigma_m: 0.1,
        }
    }
}

/// Segmentation result plus the per-iteration joint energies.
#[derive(Debug, Clone)]
pub struct GrabCutRun {
    pub mask: BinaryMask,
    /// Joint energy after every iteration; non-increasing.
    pub energies: Vec<f64>,
}

/// Temporal per-pixel motion map: the L2 color difference to the previous
/// frame, normalized into `[0, 1]` by the 95th percentile (falling back to
/// the maximum when the percentile is zero). `None` for the previous frame
/// (sequence start) gives an all-zero map.
pub fn motion_weights(current: &ColorImage, previous: Option<&ColorImage>) -> Vec<f64> {
    let n = current.width * current.height;
    let Some(prev) = previous else {
        return vec![0.0; n];
    };
    assert_eq!(prev.width, current.width);
    assert_eq!(prev.height, current.height);
    let mut raw: Vec<f64> = (0..n)
        .map(|i| (current.pixels[i] - prev.pixels[i]).norm())
        .collect();
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    let max = sorted[n - 1];
    let norm = if p95 > 1e-12 {
        p95
    } else if max > 1e-12 {
        max
    } else {
        for v in raw.iter_mut() {
            *v = 0.0;
        }
        return raw;
    };
    for v in raw.iter_mut() {
        *v = (*v / norm).min(1.0);
    }
    raw
}

/// The pairwise weight between two neighbouring pixels.
#[inline]
pub fn pairwise_weight(
    params: &GrabCutParams,
    beta: f64,
    c_p: &nalgebra::Vector3<f64>,
    c_q: &nalgebra::Vector3<f64>,
    motion_pq: f64,
) -> f64 {
    params.gamma
        * (-beta * (c_p - c_q).norm_squared()).exp()
        * (1.0 + params.mu * (-motion_pq / params.sigma_m).exp())
}

/// β = 1 / (2 · mean‖c_p − c_q‖²) over all 8-neighbour pairs; zero for a
/// perfectly flat image (uniform contrast weights).
pub fn contrast_beta(image: &ColorImage) -> f64 {
    let (w, h) = (image.width, image.height);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let c = image.get(x, y);
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                total += (c - image.get(nx as usize, ny as usize)).norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 || total <= 1e-12 {
        0.0
    } else {
        1.0 / (2.0 * total / count as f64)
    }
}

struct Neighbour {
    p: usize,
    q: usize,
    weight: f64,
}

/// Iterated segmentation: fit per-region GMMs on the current labeling,
/// build the 8-connected graph with mixture data terms and
/// contrast/motion pairwise terms, solve the minimum cut, repeat. Known
/// trimap pixels are hard-wired to their terminal, so the output always
/// contains the known foreground and excludes the known background.
pub fn grabcut_segment(
    image: &ColorImage,
    trimap: &Trimap,
    motion: Option<&[f64]>,
    params: &GrabCutParams,
) -> Result<GrabCutRun> {
    let (w, h) = (image.width, image.height);
    if trimap.width() != w || trimap.height() != h {
        return Err(Error::DimensionMismatch("trimap size != image size".into()));
    }
    let n = w * h;
    if let Some(m) = motion {
        if m.len() != n {
            return Err(Error::DimensionMismatch("motion map size != image size".into()));
        }
    }
    let known_fg = trimap.count(TrimapLabel::KnownFg);
    let known_bg = trimap.count(TrimapLabel::KnownBg);
    if known_fg == 0 || known_bg == 0 {
        return Err(Error::InvalidInput(
            "trimap must contain known foreground and background".into(),
        ));
    }

    let labels: Vec<TrimapLabel> = (0..n)
        .map(|i| trimap.get(i % w, i / w))
        .collect();
    let mut fg: Vec<bool> = labels
        .iter()
        .map(|l| matches!(l, TrimapLabel::KnownFg | TrimapLabel::UncertainFg))
        .collect();

    // Fully constrained trimap: nothing to optimize.
    let uncertain: Vec<usize> = (0..n)
        .filter(|&i| {
            matches!(
                labels[i],
                TrimapLabel::UncertainFg | TrimapLabel::UncertainBg
            )
        })
        .collect();
    if uncertain.is_empty() {
        let mut mask = BinaryMask::new(w, h);
        for i in 0..n {
            if matches!(labels[i], TrimapLabel::KnownFg) {
                mask.set(i % w, i / w, true);
            }
        }
        return Ok(GrabCutRun {
            mask,
            energies: Vec::new(),
        });
    }

    // Pairwise structure is constant across iterations.
    let beta = contrast_beta(image);
    let mut neighbours = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                let motion_pq = motion.map_or(0.0, |m| m[p].max(m[q]));
                neighbours.push(Neighbour {
                    p,
                    q,
                    weight: pairwise_weight(params, beta, &image.pixels[p], &image.pixels[q], motion_pq),
                });
            }
        }
    }

    let mut energies = Vec::with_capacity(params.iters);
    for _ in 0..params.iters {
        // (1) + (2): per-region mixtures refitted from the current labels
        // via the component assignment step.
        let fg_pixels: Vec<nalgebra::Vector3<f64>> = (0..n)
            .filter(|&i| fg[i])
            .map(|i| image.pixels[i])
            .collect();
        let bg_pixels: Vec<nalgebra::Vector3<f64>> = (0..n)
            .filter(|&i| !fg[i])
            .map(|i| image.pixels[i])
            .collect();
        let fg_model = ColorModel::fit(&fg_pixels, params.components);
        let bg_model = ColorModel::fit(&bg_pixels, params.components);

        // (3) minimum cut over the uncertain pixels.
        let source = n;
        let sink = n + 1;
        let mut graph = FlowGraph::new(n + 2);
        for i in 0..n {
            match labels[i] {
                TrimapLabel::KnownFg => {
                    graph.add_edge(source, i, CAP_INF, 0);
                }
                TrimapLabel::KnownBg => {
                    graph.add_edge(i, sink, CAP_INF, 0);
                }
                _ => {
                    // Cutting s→p pays the background cost (p joins the
                    // sink side), p→t the foreground cost. Tight color
                    // clusters give negative log-likelihoods below zero;
                    // shifting both terminals per pixel keeps capacities
                    // nonnegative without changing the optimal cut.
                    let d_bg = bg_model.min_nll(&image.pixels[i]);
                    let d_fg = fg_model.min_nll(&image.pixels[i]);
                    let shift = (-d_bg.min(d_fg)).max(0.0);
                    graph.add_edge(source, i, ((d_bg + shift) * CAP_SCALE) as i64, 0);
                    graph.add_edge(i, sink, ((d_fg + shift) * CAP_SCALE) as i64, 0);
                }
            }
        }
        for nb in &neighbours {
            let c = (nb.weight * CAP_SCALE) as i64;
            if c > 0 {
                graph.add_edge(nb.p, nb.q, c, c);
            }
        }
        graph.max_flow(source, sink);
        let side = graph.min_cut_side(source);
        for i in 0..n {
            fg[i] = match labels[i] {
                TrimapLabel::KnownFg => true,
                TrimapLabel::KnownBg => false,
                _ => side[i],
            };
        }

        // Joint energy at the new labeling under the current models.
        let mut energy = 0.0;
        for i in 0..n {
            energy += if fg[i] {
                fg_model.min_nll(&image.pixels[i])
            } else {
                bg_model.min_nll(&image.pixels[i])
            };
        }
        for nb in &neighbours {
            if fg[nb.p] != fg[nb.q] {
                energy += nb.weight;
            }
        }
        energies.push(energy);
    }

    let mut mask = BinaryMask::new(w, h);
    for i in 0..n {
        if fg[i] {
            mask.set(i % w, i / w, true);
        }
    }
    Ok(GrabCutRun { mask, energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::build_trimap;
    use nalgebra::Vector3;

    fn blob_scene(
        w: usize,
        h: usize,
        x0: usize,
        y0: usize,
        side: usize,
        fg_color: Vector3<f64>,
        bg_color: Vector3<f64>,
    ) -> (ColorImage, BinaryMask) {
        let mut img = ColorImage::new(w, h, bg_color);
        let mut truth = BinaryMask::new(w, h);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                img.set(x, y, fg_color);
                truth.set(x, y, true);
            }
        }
        (img, truth)
    }

    #[test]
    fn two_color_scene_segments_cleanly() {
        let (img, truth) = blob_scene(
            48,
            48,
            12,
            12,
            20,
            Vector3::new(0.85, 0.3, 0.2),
            Vector3::new(0.1, 0.2, 0.7),
        );
        // Model mask approximates the truth; trimap built from it.
        let skel = BinaryMask::new(48, 48);
        let (trimap, _) = build_trimap(&skel, &truth, 3.0, 4.0);
        let run = grabcut_segment(&img, &trimap, None, &GrabCutParams::default()).unwrap();
        assert!(run.mask.iou(&truth) > 0.99, "IoU {}", run.mask.iou(&truth));
    }

    #[test]
    fn hard_constraints_hold_exactly() {
        let (img, truth) = blob_scene(
            40,
            40,
            10,
            10,
            16,
            Vector3::new(0.8, 0.8, 0.2),
            Vector3::new(0.2, 0.2, 0.2),
        );
        let skel = BinaryMask::new(40, 40);
        let (trimap, _) = build_trimap(&skel, &truth, 2.0, 3.0);
        let run = grabcut_segment(&img, &trimap, None, &GrabCutParams::default()).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                match trimap.get(x, y) {
                    TrimapLabel::KnownFg => assert!(run.mask.get(x, y)),
                    TrimapLabel::KnownBg => assert!(!run.mask.get(x, y)),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn energy_is_non_increasing_across_iterations() {
        let (mut img, truth) = blob_scene(
            40,
            40,
            8,
            8,
            22,
            Vector3::new(0.7, 0.4, 0.3),
            Vector3::new(0.25, 0.35, 0.6),
        );
        // Noise makes the models imperfect so iterations matter.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for p in img.pixels.iter_mut() {
            *p += Vector3::new(
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.08..0.08),
                rng.random_range(-0.08..0.08),
            );
        }
        let skel = BinaryMask::new(40, 40);
        let (trimap, _) = build_trimap(&skel, &truth, 3.0, 5.0);
        let run = grabcut_segment(&img, &trimap, None, &GrabCutParams::default()).unwrap();
        for w in run.energies.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6 * (1.0 + w[0].abs()),
                "energy increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn fully_constrained_trimap_returns_known_fg() {
        let (img, truth) = blob_scene(
            24,
            24,
            8,
            8,
            8,
            Vector3::new(0.9, 0.1, 0.1),
            Vector3::new(0.1, 0.9, 0.1),
        );
        let mut trimap = Trimap::new(24, 24, TrimapLabel::KnownBg);
        for y in 0..24 {
            for x in 0..24 {
                if truth.get(x, y) {
                    trimap.set(x, y, TrimapLabel::KnownFg);
                }
            }
        }
        let run = grabcut_segment(&img, &trimap, None, &GrabCutParams::default()).unwrap();
        assert_eq!(run.mask, truth);
    }

    #[test]
    fn mu_zero_reduces_to_plain_contrast_weights() {
        let params0 = GrabCutParams { mu: 0.0, ..GrabCutParams::default() };
        let beta = 3.7;
        let a = Vector3::new(0.2, 0.4, 0.6);
        let b = Vector3::new(0.5, 0.1, 0.3);
        let plain = params0.gamma * f64::exp(-beta * (a - b).norm_squared());
        assert_eq!(pairwise_weight(&params0, beta, &a, &b, 0.83), plain);
    }

    #[test]
    fn motion_map_basics() {
        let a = ColorImage::new(8, 8, Vector3::new(0.5, 0.5, 0.5));
        // First frame: all zeros.
        assert!(motion_weights(&a, None).iter().all(|&v| v == 0.0));
        // Identical frames: all zeros.
        assert!(motion_weights(&a, Some(&a)).iter().all(|&v| v == 0.0));
        // One pixel changed black to white: that pixel 1, others 0.
        let mut b = a.clone();
        b.set(3, 4, Vector3::new(1.0, 1.0, 1.0));
        let m = motion_weights(&b, Some(&a));
        for y in 0..8 {
            for x in 0..8 {
                let expect = if (x, y) == (3, 4) { 1.0 } else { 0.0 };
                assert_eq!(m[y * 8 + x], expect);
            }
        }
    }

    #[test]
    fn translating_square_marks_leading_and_trailing_edges() {
        let bg = Vector3::new(0.1, 0.1, 0.1);
        let fgc = Vector3::new(0.9, 0.9, 0.9);
        let (prev, _) = blob_scene(32, 32, 8, 10, 10, fgc, bg);
        let (cur, _) = blob_scene(32, 32, 11, 10, 10, fgc, bg);
        let m = motion_weights(&cur, Some(&prev));
        for y in 12..18 {
            // Trailing edge (uncovered) and leading edge (newly covered)
            // carry motion; the overlap interior does not.
            assert!(m[y * 32 + 9] > 0.5);
            assert!(m[y * 32 + 19] > 0.5);
            assert_eq!(m[y * 32 + 15], 0.0);
        }
    }

    #[test]
    fn motion_cue_recovers_foreground_when_colors_match() {
        // Foreground and background share one color in the segmented
        // frame; the background flickered in the previous frame. With the
        // motion boost the cut follows the static region; without it the
        // cheapest cut collapses to the eroded seed.
        let shared = Vector3::new(0.5, 0.5, 0.5);
        let w = 40;
        let (x0, y0, side) = (10usize, 10usize, 20usize);
        let mut truth = BinaryMask::new(w, w);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                truth.set(x, y, true);
            }
        }
        let cur = ColorImage::new(w, w, shared);
        let mut prev = cur.clone();
        for y in 0..w {
            for x in 0..w {
                if !truth.get(x, y) {
                    prev.set(x, y, Vector3::new(0.9, 0.2, 0.4)); // bg flicker
                }
            }
        }
        let motion = motion_weights(&cur, Some(&prev));
        let skel = BinaryMask::new(w, w);
        // Erosion 3 keeps the seed perimeter above half the true
        // boundary's, so the doubled static-region weights make collapsing
        // onto the seed more expensive than cutting at the true boundary.
        let (trimap, _) = build_trimap(&skel, &truth, 3.0, 4.0);

        let with_motion = grabcut_segment(&cur, &trimap, Some(&motion), &GrabCutParams::default()).unwrap();
        let without = grabcut_segment(
            &cur,
            &trimap,
            Some(&motion),
            &GrabCutParams { mu: 0.0, ..GrabCutParams::default() },
        )
        .unwrap();
        let iou_with = with_motion.mask.iou(&truth);
        let iou_without = without.mask.iou(&truth);
        assert!(
            iou_with > iou_without,
            "motion cue did not help: {iou_with} vs {iou_without}"
        );
    }
}

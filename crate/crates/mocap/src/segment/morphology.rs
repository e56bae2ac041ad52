//! Binary morphology with a disc structuring element, via the exact
//! squared Euclidean distance transform (per-dimension lower envelope of
//! parabolas). Results match a brute-force disc sweep exactly.

use crate::raster::BinaryMask;

use super::{Trimap, TrimapLabel};

const INF: f64 = 1e18;

/// 1D squared distance transform.
fn dt1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance to the nearest set pixel.
fn edt_squared(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut dist = vec![INF; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                dist[y * w + x] = 0.0;
            }
        }
    }
    let mut col = vec![0.0; h];
    let mut out = Vec::new();
    for x in 0..w {
        for y in 0..h {
            col[y] = dist[y * w + x];
        }
        dt1d(&col, &mut out);
        for y in 0..h {
            dist[y * w + x] = out[y];
        }
    }
    let mut row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&dist[y * w..(y + 1) * w]);
        dt1d(&row, &mut out);
        dist[y * w..(y + 1) * w].copy_from_slice(&out);
    }
    dist
}

/// Dilation with a disc of radius `r`: pixels within distance `r` of the
/// foreground.
pub fn dilate(mask: &BinaryMask, r: f64) -> BinaryMask {
    let d2 = edt_squared(mask);
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::new(w, h);
    let r2 = r * r;
    for y in 0..h {
        for x in 0..w {
            if d2[y * w + x] <= r2 {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Erosion with a disc of radius `r`: foreground pixels farther than `r`
/// from any background, counting everything outside the image as
/// background.
pub fn erode(mask: &BinaryMask, r: f64) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut inverse = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                inverse.set(x, y, true);
            }
        }
    }
    let d2 = edt_squared(&inverse);
    let mut out = BinaryMask::new(w, h);
    let r2 = r * r;
    for y in 0..h {
        for x in 0..w {
            // Distance to the virtual background beyond the border.
            let border = (x + 1).min(w - x).min(y + 1).min(h - y) as f64;
            let d = d2[y * w + x].min(border * border);
            if mask.get(x, y) && d > r2 {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Builds the segmentation trimap from the rasterized skeleton mask `R`
/// and skinned mesh mask `M`:
/// known fg = `R ∪ erosion(M)`, known bg = complement of `dilation(M)`,
/// uncertain fg = `M` minus known fg, uncertain bg = `dilation(M) − M`.
/// An empty mesh mask labels everything known background and sets the
/// returned flag.
pub fn build_trimap(
    skel_mask: &BinaryMask,
    mesh_mask: &BinaryMask,
    erosion_radius: f64,
    dilation_radius: f64,
) -> (Trimap, bool) {
    let (w, h) = (mesh_mask.width(), mesh_mask.height());
    assert_eq!(skel_mask.width(), w);
    assert_eq!(skel_mask.height(), h);
    if !mesh_mask.any() {
        return (Trimap::new(w, h, TrimapLabel::KnownBg), true);
    }
    let eroded = erode(mesh_mask, erosion_radius);
    let dilated = dilate(mesh_mask, dilation_radius);
    let mut trimap = Trimap::new(w, h, TrimapLabel::KnownBg);
    for y in 0..h {
        for x in 0..w {
            let label = if skel_mask.get(x, y) || eroded.get(x, y) {
                TrimapLabel::KnownFg
            } else if mesh_mask.get(x, y) {
                TrimapLabel::UncertainFg
            } else if dilated.get(x, y) {
                TrimapLabel::UncertainBg
            } else {
                TrimapLabel::KnownBg
            };
            trimap.set(x, y, label);
        }
    }
    (trimap, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: usize, y0: usize, side: usize, w: usize, h: usize) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        m
    }

    /// Brute-force disc morphology oracle.
    fn dilate_oracle(mask: &BinaryMask, r: f64) -> BinaryMask {
        let (w, h) = (mask.width(), mask.height());
        let mut out = BinaryMask::new(w, h);
        let ri = r.ceil() as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                'search: for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        if (dx * dx + dy * dy) as f64 <= r * r && mask.get_i(x + dx, y + dy) {
                            out.set(x as usize, y as usize, true);
                            break 'search;
                        }
                    }
                }
            }
        }
        out
    }

    fn erode_oracle(mask: &BinaryMask, r: f64) -> BinaryMask {
        let (w, h) = (mask.width(), mask.height());
        let mut out = BinaryMask::new(w, h);
        let ri = r.ceil() as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if !mask.get_i(x, y) {
                    continue;
                }
                let mut keep = true;
                'check: for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        if (dx * dx + dy * dy) as f64 <= r * r && !mask.get_i(x + dx, y + dy) {
                            keep = false;
                            break 'check;
                        }
                    }
                }
                out.set(x as usize, y as usize, keep);
            }
        }
        out
    }

    #[test]
    fn morphology_matches_brute_force_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for r in [1.0, 2.0, 2.5, 4.0] {
            let mut m = BinaryMask::new(24, 18);
            for y in 0..18 {
                for x in 0..24 {
                    if rng.random_bool(0.3) {
                        m.set(x, y, true);
                    }
                }
            }
            assert_eq!(dilate(&m, r), dilate_oracle(&m, r), "dilate r={r}");
            assert_eq!(erode(&m, r), erode_oracle(&m, r), "erode r={r}");
        }
    }

    #[test]
    fn trimap_of_square_mask() {
        let m = square(10, 10, 20, 48, 48);
        let r = BinaryMask::new(48, 48);
        let (trimap, flagged) = build_trimap(&r, &m, 2.0, 2.0);
        assert!(!flagged);
        // Known fg is the 16×16 eroded interior.
        assert_eq!(trimap.count(TrimapLabel::KnownFg), 16 * 16);
        for y in 12..28 {
            for x in 12..28 {
                assert_eq!(trimap.get(x, y), TrimapLabel::KnownFg);
            }
        }
        // Uncertain fg is the rest of M.
        assert_eq!(trimap.count(TrimapLabel::UncertainFg), 20 * 20 - 16 * 16);
        // Uncertain bg matches the morphology oracle ring.
        let ring = dilate_oracle(&m, 2.0);
        let mut expected_ub = 0;
        for y in 0..48 {
            for x in 0..48 {
                if ring.get(x, y) && !m.get(x, y) {
                    expected_ub += 1;
                    assert_eq!(trimap.get(x, y), TrimapLabel::UncertainBg);
                }
            }
        }
        assert_eq!(trimap.count(TrimapLabel::UncertainBg), expected_ub);
        // Everything else is known bg; the four labels partition the image.
        let total = trimap.count(TrimapLabel::KnownFg)
            + trimap.count(TrimapLabel::UncertainFg)
            + trimap.count(TrimapLabel::UncertainBg)
            + trimap.count(TrimapLabel::KnownBg);
        assert_eq!(total, 48 * 48);
    }

    #[test]
    fn skeleton_outside_mesh_stays_known_fg() {
        let m = square(10, 10, 20, 48, 48);
        let mut r = BinaryMask::new(48, 48);
        r.set(40, 40, true); // outside M entirely
        r.set(11, 11, true); // in M but outside the eroded core
        let (trimap, _) = build_trimap(&r, &m, 2.0, 2.0);
        assert_eq!(trimap.get(40, 40), TrimapLabel::KnownFg);
        assert_eq!(trimap.get(11, 11), TrimapLabel::KnownFg);
    }

    #[test]
    fn dilation_covering_image_leaves_no_known_bg() {
        let m = square(2, 2, 20, 24, 24);
        let r = BinaryMask::new(24, 24);
        let (trimap, _) = build_trimap(&r, &m, 1.0, 50.0);
        assert_eq!(trimap.count(TrimapLabel::KnownBg), 0);
    }

    #[test]
    fn empty_mesh_mask_is_all_background_and_flagged() {
        let m = BinaryMask::new(16, 16);
        let r = BinaryMask::new(16, 16);
        let (trimap, flagged) = build_trimap(&r, &m, 2.0, 2.0);
        assert!(flagged);
        assert_eq!(trimap.count(TrimapLabel::KnownBg), 16 * 16);
    }
}

use nalgebra::{Vector2, Vector3};

use crate::kinematics::Camera;

use super::BinaryMask;

const EPS_DEPTH: f64 = 1e-6;

/// Edge function: twice the signed area of (a, b, p).
#[inline]
fn edge(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// In y-down pixel coordinates with counter-clockwise winding (positive
/// edge functions inside), boundary pixels belong to the triangle when the
/// edge is a top edge (horizontal, pointing +x) or a left edge (pointing
/// −y). Shared edges between adjacent triangles are then covered exactly
/// once.
#[inline]
fn is_top_left(a: Vector2<f64>, b: Vector2<f64>) -> bool {
    let dy = b.y - a.y;
    (dy == 0.0 && b.x > a.x) || dy < 0.0
}

#[inline]
fn covered(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Rasterizes the mesh silhouette: a pixel is set iff its center is covered
/// by any triangle whose three vertices project in front of the camera.
/// Binary coverage only (no depth buffer); the deterministic top-left fill
/// rule decides boundary pixels. Triangles with a vertex at or behind the
/// camera plane are skipped.
pub fn render_mask(vertices: &[Vector3<f64>], triangles: &[[usize; 3]], cam: &Camera) -> BinaryMask {
    let mut mask = BinaryMask::new(cam.width as usize, cam.height as usize);
    let projected: Vec<Option<Vector2<f64>>> = vertices
        .iter()
        .map(|v| (v.z > EPS_DEPTH).then(|| cam.project(v).expect("z checked")))
        .collect();

    for tri in triangles {
        let (Some(mut a), Some(mut b), Some(c)) = (
            projected[tri[0]],
            projected[tri[1]],
            projected[tri[2]],
        ) else {
            continue;
        };
        let area2 = edge(a, b, c);
        if area2 == 0.0 {
            continue;
        }
        if area2 < 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        let min_x = a.x.min(b.x).min(c.x).floor().max(0.0) as usize;
        let max_x = (a.x.max(b.x).max(c.x).ceil() as i64).min(mask.width() as i64 - 1);
        let min_y = a.y.min(b.y).min(c.y).floor().max(0.0) as usize;
        let max_y = (a.y.max(b.y).max(c.y).ceil() as i64).min(mask.height() as i64 - 1);
        if max_x < 0 || max_y < 0 {
            continue;
        }
        let tl = [is_top_left(a, b), is_top_left(b, c), is_top_left(c, a)];
        for y in min_y..=(max_y as usize) {
            for x in min_x..=(max_x as usize) {
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w0 = edge(a, b, p);
                let w1 = edge(b, c, p);
                let w2 = edge(c, a, p);
                if covered(w0, tl[0]) && covered(w1, tl[1]) && covered(w2, tl[2]) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 0.0, 0.0, 64, 64).unwrap()
    }

    /// Brute-force oracle: evaluates the same coverage predicate at every
    /// pixel of the image, without bounding boxes or clipping.
    fn oracle(vertices: &[Vector3<f64>], triangles: &[[usize; 3]], cam: &Camera) -> BinaryMask {
        let mut mask = BinaryMask::new(cam.width as usize, cam.height as usize);
        for tri in triangles {
            let vs: Vec<_> = tri.iter().map(|&i| vertices[i]).collect();
            if vs.iter().any(|v| v.z <= EPS_DEPTH) {
                continue;
            }
            let mut a = cam.project(&vs[0]).unwrap();
            let mut b = cam.project(&vs[1]).unwrap();
            let c = cam.project(&vs[2]).unwrap();
            let area2 = edge(a, b, c);
            if area2 == 0.0 {
                continue;
            }
            if area2 < 0.0 {
                std::mem::swap(&mut a, &mut b);
            }
            let tl = [is_top_left(a, b), is_top_left(b, c), is_top_left(c, a)];
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    if covered(edge(a, b, p), tl[0])
                        && covered(edge(b, c, p), tl[1])
                        && covered(edge(c, a, p), tl[2])
                    {
                        mask.set(x, y, true);
                    }
                }
            }
        }
        mask
    }

    /// Places pixel-space corners at depth 1 for the unit camera.
    fn tri_at(px: [[f64; 2]; 3]) -> Vec<Vector3<f64>> {
        px.iter()
            .map(|p| Vector3::new(p[0] / 100.0, p[1] / 100.0, 1.0))
            .collect()
    }

    #[test]
    fn single_triangle_matches_edge_function_oracle() {
        let cam = cam();
        let verts = tri_at([[10.0, 10.0], [20.0, 10.0], [10.0, 20.0]]);
        let tris = vec![[0, 1, 2]];
        let fast = render_mask(&verts, &tris, &cam);
        let slow = oracle(&verts, &tris, &cam);
        assert_eq!(fast, slow);
        assert!(fast.count() > 20);
    }

    #[test]
    fn random_triangles_match_oracle_bit_exactly() {
        use rand::{Rng, SeedableRng};
        let cam = cam();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let mut verts = Vec::new();
            let mut tris = Vec::new();
            for t in 0..3 {
                for _ in 0..3 {
                    verts.push(Vector3::new(
                        rng.random_range(-0.2..0.8),
                        rng.random_range(-0.2..0.8),
                        1.0,
                    ));
                }
                tris.push([3 * t, 3 * t + 1, 3 * t + 2]);
            }
            assert_eq!(render_mask(&verts, &tris, &cam), oracle(&verts, &tris, &cam));
        }
    }

    #[test]
    fn adjacent_triangles_cover_shared_edge_once() {
        // A square split along the diagonal: total coverage must equal the
        // square, counted once (union equals the sum of counts).
        let cam = cam();
        let verts = tri_at([[8.0, 8.0], [40.0, 8.0], [40.0, 40.0]]);
        let mut all = verts.clone();
        all.extend(tri_at([[8.0, 8.0], [40.0, 40.0], [8.0, 40.0]]));
        let m0 = render_mask(&all[0..3], &[[0, 1, 2]], &cam);
        let m1 = render_mask(&all[3..6], &[[0, 1, 2]], &cam);
        let both = render_mask(&all, &[[0, 1, 2], [3, 4, 5]], &cam);
        assert_eq!(m0.count() + m1.count(), both.count());
        assert_eq!(m0.union(&m1), both);
    }

    #[test]
    fn mesh_behind_camera_renders_empty() {
        let cam = cam();
        let verts = vec![
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(0.2, 0.0, -1.0),
            Vector3::new(0.0, 0.2, -1.0),
        ];
        let mask = render_mask(&verts, &[[0, 1, 2]], &cam);
        assert!(!mask.any());
    }

    #[test]
    fn disjoint_triangles_union() {
        let cam = cam();
        let mut verts = tri_at([[5.0, 5.0], [15.0, 5.0], [5.0, 15.0]]);
        verts.extend(tri_at([[40.0, 40.0], [55.0, 40.0], [40.0, 55.0]]));
        let m0 = render_mask(&verts[0..3], &[[0, 1, 2]], &cam);
        let m1 = render_mask(&verts[3..6], &[[0, 1, 2]], &cam);
        let both = render_mask(&verts, &[[0, 1, 2], [3, 4, 5]], &cam);
        assert_eq!(both, m0.union(&m1));
    }

    #[test]
    fn empty_mesh_renders_empty() {
        let mask = render_mask(&[], &[], &cam());
        assert!(!mask.any());
    }
}

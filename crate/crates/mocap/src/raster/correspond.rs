use nalgebra::{Vector2, Vector3};

use crate::kinematics::Camera;

use super::{extract_contour, render_mask, Contour};

/// A mesh vertex on the rendered silhouette rim, with its projected pixel
/// position and the contour normal at the nearest contour sample.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryVertex {
    pub index: usize,
    pub projected: Vector2<f64>,
    pub normal: Vector2<f64>,
}

/// One pruned silhouette correspondence: vertex `k` is pulled toward the
/// target silhouette point `s_k` along the target normal `n_k`.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub vertex: usize,
    pub target: Vector2<f64>,
    pub normal: Vector2<f64>,
}

pub type CorrespondenceSet = Vec<Correspondence>;

/// Distance from a point to the unit pixel square centered at `c`.
#[inline]
fn pixel_footprint_distance(p: Vector2<f64>, c: Vector2<f64>) -> f64 {
    let dx = ((p.x - c.x).abs() - 0.5).max(0.0);
    let dy = ((p.y - c.y).abs() - 0.5).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

/// Identifies the silhouette rim of a posed mesh: vertices whose
/// projection lies within `tolerance_px` (default 1) of a rendered-mask
/// contour pixel, tagged with the nearest contour point's outward normal.
pub fn model_boundary_vertices(
    vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    cam: &Camera,
    tolerance_px: f64,
) -> Vec<BoundaryVertex> {
    let mask = render_mask(vertices, triangles, cam);
    let contour = extract_contour(&mask);
    if contour.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (index, v) in vertices.iter().enumerate() {
        let Ok(p) = cam.project(v) else { continue };
        let mut best = f64::INFINITY;
        let mut best_normal = Vector2::zeros();
        for cp in &contour.points {
            let d = pixel_footprint_distance(p, cp.pos);
            if d < best {
                best = d;
                best_normal = cp.normal;
            }
        }
        if best <= tolerance_px {
            out.push(BoundaryVertex {
                index,
                projected: p,
                normal: best_normal,
            });
        }
    }
    out
}

/// Matches each model boundary vertex to its nearest target-contour point
/// among those with a compatible normal (angle within
/// `max_normal_angle_deg`), keeping pairs within `max_dist` pixels. Ties go
/// to the lowest contour index. Both gates hold exactly for every returned
/// pair; the result may be empty.
pub fn find_correspondences(
    boundary: &[BoundaryVertex],
    target: &Contour,
    max_dist: f64,
    max_normal_angle_deg: f64,
) -> CorrespondenceSet {
    let cos_limit = max_normal_angle_deg.to_radians().cos();
    let mut out = Vec::new();
    for bv in boundary {
        let mut best = f64::INFINITY;
        let mut hit: Option<Correspondence> = None;
        for cp in &target.points {
            if bv.normal.dot(&cp.normal) < cos_limit {
                continue;
            }
            let d = (cp.pos - bv.projected).norm();
            if d < best {
                best = d;
                hit = Some(Correspondence {
                    vertex: bv.index,
                    target: cp.pos,
                    normal: cp.normal,
                });
            }
        }
        if best <= max_dist {
            if let Some(c) = hit {
                out.push(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BinaryMask, ContourPoint};
    use approx::assert_relative_eq;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn square_contour(x0: usize, y0: usize, side: usize) -> Contour {
        let mut m = BinaryMask::new(64, 64);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        extract_contour(&m)
    }

    fn to_boundary(c: &Contour) -> Vec<BoundaryVertex> {
        c.points
            .iter()
            .enumerate()
            .map(|(i, p)| BoundaryVertex {
                index: i,
                projected: p.pos,
                normal: p.normal,
            })
            .collect()
    }

    #[test]
    fn identical_contours_match_at_zero_distance() {
        let c = square_contour(10, 10, 12);
        let boundary = to_boundary(&c);
        let set = find_correspondences(&boundary, &c, 30.0, 45.0);
        assert_eq!(set.len(), boundary.len());
        for (corr, bv) in set.iter().zip(boundary.iter()) {
            assert_relative_eq!((corr.target - bv.projected).norm(), 0.0);
        }
    }

    #[test]
    fn shifted_square_matches_along_edges() {
        let c0 = square_contour(10, 10, 12);
        let c1 = square_contour(15, 10, 12); // shifted 5 px right
        let boundary = to_boundary(&c0);
        let set = find_correspondences(&boundary, &c1, 30.0, 45.0);
        assert!(!set.is_empty());
        for corr in &set {
            let bv = &boundary[corr.vertex];
            let d = (corr.target - bv.projected).norm();
            // Left/right edge vertices match at distance 5; top/bottom edge
            // vertices find compatible points within 5 px.
            assert!(d <= 5.0 + 1e-9, "distance {d}");
            if bv.normal.x.abs() > 0.99 {
                assert_relative_eq!(d, 5.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn flipped_normals_give_an_empty_set() {
        // A square wider than max_dist: after flipping the target
        // normals, only points on the far side are normal-compatible and
        // they all lie beyond the distance gate.
        let c0 = square_contour(10, 10, 40);
        let mut c1 = c0.clone();
        for p in c1.points.iter_mut() {
            p.normal = -p.normal;
        }
        let set = find_correspondences(&to_boundary(&c0), &c1, 30.0, 45.0);
        assert!(set.is_empty());
    }

    #[test]
    fn gates_hold_exactly_for_every_pair() {
        let c0 = square_contour(10, 10, 12);
        let c1 = square_contour(14, 12, 14);
        let boundary = to_boundary(&c0);
        let max_dist = 6.0;
        let max_angle = 30.0f64;
        let set = find_correspondences(&boundary, &c1, max_dist, max_angle);
        for corr in &set {
            let bv = &boundary[corr.vertex];
            assert!((corr.target - bv.projected).norm() <= max_dist);
            assert!(bv.normal.dot(&corr.normal) >= max_angle.to_radians().cos());
        }
        // Each vertex appears at most once.
        let mut seen = std::collections::HashSet::new();
        for corr in &set {
            assert!(seen.insert(corr.vertex));
        }
    }

    #[test]
    fn ties_resolve_to_the_lowest_contour_index() {
        let boundary = vec![BoundaryVertex {
            index: 0,
            projected: Vector2::new(10.0, 10.0),
            normal: Vector2::new(1.0, 0.0),
        }];
        // Two equidistant candidates with identical normals.
        let target = Contour {
            points: vec![
                ContourPoint {
                    pos: Vector2::new(13.0, 10.0),
                    normal: Vector2::new(1.0, 0.0),
                },
                ContourPoint {
                    pos: Vector2::new(7.0, 10.0),
                    normal: Vector2::new(1.0, 0.0),
                },
            ],
        };
        let set = find_correspondences(&boundary, &target, 10.0, 45.0);
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].target, Vector2::new(13.0, 10.0));
    }

    #[test]
    fn sphere_boundary_vertices_lie_on_the_projected_circle() {
        // Tessellated sphere at depth z: silhouette radius ≈ f·r/z for
        // z ≫ r; every reported rim vertex projects onto that circle.
        let cam = Camera::new(1000.0, 1000.0, 128.0, 128.0, 256, 256).unwrap();
        let (r, z) = (0.5, 10.0);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let (nu, nv) = (48usize, 24usize);
        for iv in 0..=nv {
            let theta = std::f64::consts::PI * iv as f64 / nv as f64;
            for iu in 0..nu {
                let phi = 2.0 * std::f64::consts::PI * iu as f64 / nu as f64;
                vertices.push(Vector3::new(
                    r * theta.sin() * phi.cos(),
                    r * theta.sin() * phi.sin(),
                    z + r * theta.cos(),
                ));
            }
        }
        for iv in 0..nv {
            for iu in 0..nu {
                let a = iv * nu + iu;
                let b = iv * nu + (iu + 1) % nu;
                let c = (iv + 1) * nu + iu;
                let d = (iv + 1) * nu + (iu + 1) % nu;
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
        let boundary = model_boundary_vertices(&vertices, &triangles, &cam, 1.0);
        assert!(boundary.len() > 20, "found {} rim vertices", boundary.len());
        let radius_px = cam.fx * r / z;
        let center = Vector2::new(128.0, 128.0);
        for bv in &boundary {
            let dist = (bv.projected - center).norm();
            // Analytic radius plus the pixel-footprint slack of the rim
            // test (1 px tolerance + half a pixel diagonal each way).
            assert!(
                (dist - radius_px).abs() <= 2.5,
                "rim vertex at {dist} px vs circle {radius_px}"
            );
        }
    }

    #[test]
    fn single_triangle_vertices_are_all_boundary() {
        let cam = cam();
        let vertices = vec![
            Vector3::new(-0.12, -0.12, 1.0),
            Vector3::new(0.15, -0.12, 1.0),
            Vector3::new(-0.12, 0.17, 1.0),
        ];
        let boundary = model_boundary_vertices(&vertices, &[[0, 1, 2]], &cam, 1.0);
        let ids: Vec<usize> = boundary.iter().map(|b| b.index).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn interior_vertex_is_excluded() {
        let cam = cam();
        // A fan of triangles around a center vertex: the center is interior.
        let mut vertices = vec![Vector3::new(0.0, 0.0, 1.0)];
        let n = 8;
        for k in 0..n {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vertices.push(Vector3::new(0.15 * a.cos(), 0.15 * a.sin(), 1.0));
        }
        let mut triangles = Vec::new();
        for k in 0..n {
            triangles.push([0, 1 + k, 1 + (k + 1) % n]);
        }
        let boundary = model_boundary_vertices(&vertices, &triangles, &cam, 1.0);
        assert!(!boundary.iter().any(|b| b.index == 0));
        assert!(boundary.len() >= n - 1);
    }

    #[test]
    fn self_match_after_render_and_extract_is_exact() {
        let cam = cam();
        let vertices = vec![
            Vector3::new(-0.12, -0.12, 1.0),
            Vector3::new(0.15, -0.12, 1.0),
            Vector3::new(0.15, 0.17, 1.0),
            Vector3::new(-0.12, 0.17, 1.0),
        ];
        let triangles = vec![[0, 1, 2], [0, 2, 3]];
        let mask = render_mask(&vertices, &triangles, &cam);
        let contour = extract_contour(&mask);
        let boundary = to_boundary(&contour);
        let set = find_correspondences(&boundary, &contour, 30.0, 45.0);
        let total: f64 = set
            .iter()
            .map(|c| (c.target - boundary[c.vertex].projected).norm())
            .sum();
        assert_eq!(total, 0.0);
        assert_eq!(set.len(), contour.len());
    }
}

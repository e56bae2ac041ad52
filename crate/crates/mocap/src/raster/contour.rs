use nalgebra::Vector2;

use super::BinaryMask;

/// One silhouette boundary sample: the pixel-center position and the
/// outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub pos: Vector2<f64>,
    pub normal: Vector2<f64>,
}

/// Boundary of a binary mask in deterministic row-major order.
#[derive(Debug, Clone, Default)]
pub struct Contour {
    pub points: Vec<ContourPoint>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Extracts boundary pixels (foreground with at least one 4-neighbour of
/// background, counting outside the image as background). Outward normals
/// come from the Sobel gradient of the 3×3 box-smoothed occupancy; pixels
/// with a vanishing gradient (e.g. an isolated single pixel) are dropped.
pub fn extract_contour(mask: &BinaryMask) -> Contour {
    let mut points = Vec::new();
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let occupancy = |x: i64, y: i64| -> f64 {
        if mask.get_i(x, y) {
            1.0
        } else {
            0.0
        }
    };
    let smooth = |x: i64, y: i64| -> f64 {
        let mut s = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                s += occupancy(x + dx, y + dy);
            }
        }
        s / 9.0
    };
    for y in 0..h {
        for x in 0..w {
            if !mask.get_i(x, y) {
                continue;
            }
            let boundary = !mask.get_i(x - 1, y)
                || !mask.get_i(x + 1, y)
                || !mask.get_i(x, y - 1)
                || !mask.get_i(x, y + 1);
            if !boundary {
                continue;
            }
            // Sobel on the smoothed occupancy; the gradient points inward.
            let mut gx = 0.0;
            let mut gy = 0.0;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let v = smooth(x + dx, y + dy);
                    let wx = [-1.0, 0.0, 1.0][(dx + 1) as usize]
                        * [1.0, 2.0, 1.0][(dy + 1) as usize];
                    let wy = [1.0, 2.0, 1.0][(dx + 1) as usize]
                        * [-1.0, 0.0, 1.0][(dy + 1) as usize];
                    gx += wx * v;
                    gy += wy * v;
                }
            }
            let norm = (gx * gx + gy * gy).sqrt();
            if norm < 1e-9 {
                continue;
            }
            points.push(ContourPoint {
                pos: Vector2::new(x as f64 + 0.5, y as f64 + 0.5),
                normal: Vector2::new(-gx / norm, -gy / norm),
            });
        }
    }
    Contour { points }
}

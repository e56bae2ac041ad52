//! Software rasterization to binary masks, silhouette contour extraction
//! and normal-compatible correspondence search between a model boundary and
//! an image silhouette.

mod contour;
mod correspond;
mod skeleton;
mod triangle;

pub use contour::{extract_contour, Contour, ContourPoint};
pub use correspond::{
    find_correspondences, model_boundary_vertices, BoundaryVertex, Correspondence,
    CorrespondenceSet,
};
pub use skeleton::render_skeleton_mask;
pub use triangle::render_mask;

use std::path::Path;

use crate::{Error, Result};

/// A width × height bit mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-image coordinates read as background.
    #[inline]
    pub fn get_i(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// Bounding box of the set pixels as `(x0, y0, x1, y1)` inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }

    /// Intersection over union with another mask of the same size.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.width, other.width);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| *a || *b)
            .collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Writes an 8-bit PNG with foreground 255, background 0.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for (i, v) in self.data.iter().enumerate() {
            let x = (i % self.width) as u32;
            let y = (i / self.width) as u32;
            img.put_pixel(x, y, image::Luma([if *v { 255 } else { 0 }]));
        }
        img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// Loads a mask from an 8-bit PNG; pixels above 127 are foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut mask = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                mask.set(x, y, img.get_pixel(x as u32, y as u32)[0] > 127);
            }
        }
        Ok(mask)
    }
}

//! Model-guided automatic silhouette extraction: trimap construction from
//! the rasterized skeleton and skinned mesh, followed by iterated
//! GMM/graph-cut foreground segmentation extended with temporal motion
//! cues.

mod gmm;
mod grabcut;
mod graph;
mod morphology;

pub use gmm::ColorModel;
pub use grabcut::{grabcut_segment, motion_weights, GrabCutParams, GrabCutRun};
pub use graph::FlowGraph;
pub use morphology::{build_trimap, dilate, erode};

use nalgebra::Vector3;
use std::path::Path;

use crate::{Error, Result};

/// Four-way trimap label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimapLabel {
    KnownFg,
    UncertainFg,
    UncertainBg,
    KnownBg,
}

/// Per-pixel segmentation prior; the labels partition the image.
#[derive(Debug, Clone)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn new(width: usize, height: usize, fill: TrimapLabel) -> Self {
        Self {
            width,
            height,
            labels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, l: TrimapLabel) {
        self.labels[y * self.width + x] = l;
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Debug rendering with known background red, uncertain background
    /// blue, uncertain foreground yellow, known foreground green.
    pub fn save_debug_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let rgb = match self.get(x, y) {
                    TrimapLabel::KnownBg => [220u8, 40, 40],
                    TrimapLabel::UncertainBg => [50, 80, 220],
                    TrimapLabel::UncertainFg => [230, 220, 60],
                    TrimapLabel::KnownFg => [60, 200, 70],
                };
                img.put_pixel(x as u32, y as u32, image::Rgb(rgb));
            }
        }
        img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vector3<f64>>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, fill: Vector3<f64>) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vector3<f64> {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Vector3<f64>) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = ColorImage::new(w, h, Vector3::zeros());
        for y in 0..h {
            for x in 0..w {
                let p = img.get_pixel(x as u32, y as u32);
                out.set(
                    x,
                    y,
                    Vector3::new(
                        p[0] as f64 / 255.0,
                        p[1] as f64 / 255.0,
                        p[2] as f64 / 255.0,
                    ),
                );
            }
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.get(x, y);
                let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([to_u8(c.x), to_u8(c.y), to_u8(c.z)]),
                );
            }
        }
        img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

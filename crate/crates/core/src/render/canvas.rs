use std::path::Path;

use image::GrayImage;

use super::RenderError;

/// Grayscale image; 1.0 is white paper, 0.0 is ink.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaffImage {
    width: usize,
    height: usize,
    /// Row-major, 255 = white.
    pixels: Vec<u8>,
}

impl StaffImage {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![255; width * height],
        }
    }

    /// `values` row-major in [0, 1], clamped.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height, "pixel count must equal width * height");
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel value in [0, 1].
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x] as f64 / 255.0
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] < 128
    }

    pub fn raw(&self) -> &[u8] {
        &self.pixels
    }

    pub(super) fn ink(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = 0;
        }
    }

    /// Inks every pixel whose center satisfies `inside`, scanning the given
    /// bounding box.
    pub(super) fn fill(&mut self, (x0, y0, x1, y1): (f64, f64, f64, f64), inside: impl Fn(f64, f64) -> bool) {
        let (xa, xb) = (x0.floor() as i64 - 1, x1.ceil() as i64 + 1);
        let (ya, yb) = (y0.floor() as i64 - 1, y1.ceil() as i64 + 1);
        for y in ya..=yb {
            for x in xa..=xb {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    self.ink(x, y);
                }
            }
        }
    }

    pub(super) fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.fill((x0, y0, x1, y1), |x, y| x >= x0 && x < x1 && y >= y0 && y < y1);
    }

    /// Segment of the given stroke width (round caps).
    pub(super) fn line(&mut self, (ax, ay): (f64, f64), (bx, by): (f64, f64), width: f64) {
        let r = width / 2.0;
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let bbox = (ax.min(bx) - r, ay.min(by) - r, ax.max(bx) + r, ay.max(by) + r);
        self.fill(bbox, |x, y| {
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
            };
            let (px, py) = (ax + t * dx - x, ay + t * dy - y);
            px * px + py * py <= r * r
        });
    }

    /// Filled ellipse, or a ring of `thickness` when `filled` is false.
    pub(super) fn ellipse(&mut self, (cx, cy): (f64, f64), rx: f64, ry: f64, filled: bool, thickness: f64) {
        let bbox = (cx - rx, cy - ry, cx + rx, cy + ry);
        let (irx, iry) = (rx - thickness, ry - thickness);
        self.fill(bbox, |x, y| {
            let outer = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0;
            let inner = irx > 0.0 && iry > 0.0 && ((x - cx) / irx).powi(2) + ((y - cy) / iry).powi(2) < 1.0;
            outer && (filled || !inner)
        });
    }

    /// Writes binary PGM, or PNG when the extension says so.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        self.to_gray().save(path)?;
        Ok(())
    }

    /// Reads any grayscale-convertible PGM/PNG file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        let img = image::open(path)?.into_luma8();
        Self::from_gray(img)
    }

    fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length matches dimensions")
    }

    fn from_gray(img: GrayImage) -> Result<Self, RenderError> {
        let (w, h) = img.dimensions();
        if w == 0 || h == 0 {
            return Err(RenderError::Empty);
        }
        Ok(Self {
            width: w as usize,
            height: h as usize,
            pixels: img.into_raw(),
        })
    }
}

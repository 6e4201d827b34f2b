use crate::geometry::Point;
use crate::{Error, Result};

/// 8-bit grayscale raster.
///
/// Pixels are stored as quantization levels `k` in `0..=255`; the normalized
/// intensity of a pixel is `k / 255`, so every value lies on the 256-level
/// grid by construction. Storage is row-major. Pixel `(x, y)` has its center
/// at continuous coordinate `(x, y)`, so a `W`-wide image spans
/// `[-0.5, W - 0.5]` horizontally.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    levels: Vec<u8>,
}

impl ImagePatch {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            levels: vec![0; width * height],
        }
    }

    pub fn from_levels(width: usize, height: usize, levels: Vec<u8>) -> Result<Self> {
        if levels.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                levels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
        })
    }

    /// Builds a patch from normalized intensities, rounding each to the
    /// nearest of the 256 levels after clamping to `[0, 1]`.
    pub fn from_normalized(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let levels = values.iter().map(|&v| quantize(v * 255.0)).collect();
        Self::from_levels(width, height, levels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<u8> {
        self.levels
    }

    #[inline]
    pub fn level(&self, x: usize, y: usize) -> u8 {
        self.levels[y * self.width + x]
    }

    #[inline]
    pub fn set_level(&mut self, x: usize, y: usize, level: u8) {
        self.levels[y * self.width + x] = level;
    }

    /// Normalized intensity in `[0, 1]`.
    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        f64::from(self.level(x, y)) / 255.0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().map(|&l| f64::from(l) / 255.0)
    }

    /// Geometric center `((W-1)/2, (H-1)/2)`.
    pub fn center(&self) -> Point {
        Point::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    /// Whether `p` lies within the image area extended by `margin` pixels.
    pub fn contains(&self, p: Point, margin: f64) -> bool {
        p.x >= -0.5 - margin
            && p.y >= -0.5 - margin
            && p.x <= self.width as f64 - 0.5 + margin
            && p.y <= self.height as f64 - 0.5 + margin
    }

    /// Extracts a `width x height` window whose top-left pixel is
    /// `(x0, y0)` in this image. Pixels falling outside are zero.
    pub fn crop(&self, x0: i64, y0: i64, width: usize, height: usize) -> ImagePatch {
        let mut out = ImagePatch::new(width, height);
        for y in 0..height {
            let sy = y0 + y as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..width {
                let sx = x0 + x as i64;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                out.levels[y * width + x] = self.level(sx as usize, sy as usize);
            }
        }
        out
    }

    /// Row-major normalized intensities as `f32`, the network input format.
    pub fn to_f32(&self) -> Vec<f32> {
        self.levels.iter().map(|&l| f32::from(l) / 255.0).collect()
    }
}

/// Rounds an 8-bit-unit intensity to the nearest level, clamping to `[0, 255]`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round() as u8
}

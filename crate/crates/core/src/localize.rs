//! Algorithmic CR center localizers.
//!
//! - [`threshold_centroid`]: binarize, fill holes, label 8-connected blobs,
//!   filter by area and circularity, return the binary centroid of the
//!   largest surviving blob.
//! - [`radial_symmetry_center`]: the gradient-line intersection estimator
//!   (Parthasarathy's radial symmetry method).
//! - [`intensity_centroid`]: intensity-weighted center of mass of the whole
//!   image; [`com_oracle`] applies it to a clean render of the CR alone.

use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::ImagePatch;
use crate::synthgen::{render_scene, CrSpec, SceneSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Threshold,
    RadialSymmetry,
    IntensityCom,
    Cnn,
    OracleCom,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Threshold,
        Method::RadialSymmetry,
        Method::IntensityCom,
        Method::Cnn,
        Method::OracleCom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Threshold => "threshold",
            Method::RadialSymmetry => "radial_symmetry",
            Method::IntensityCom => "intensity_com",
            Method::Cnn => "cnn",
            Method::OracleCom => "oracle_com",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub blob_area: Option<f64>,
    pub threshold: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationResult {
    pub center: Point,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl LocalizationResult {
    fn new(center: Point, method: Method) -> Self {
        Self {
            center,
            method,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Anything that maps an image patch to a CR center.
pub trait Localizer: Send + Sync {
    fn method(&self) -> Method;
    fn locate(&self, img: &ImagePatch) -> Result<LocalizationResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdParams {
    /// Normalized intensity in (0, 1); pixels strictly above are foreground.
    pub threshold: f64,
    pub min_area: f64,
    pub max_area: f64,
    pub min_circularity: f64,
}

impl Default for ThresholdParams {
    /// Defaults for synthetic CR patches. The threshold sits above the
    /// brightest gray background level (153/255) plus typical noise.
    fn default() -> Self {
        Self {
            threshold: 0.9,
            min_area: 1.0,
            max_area: f64::INFINITY,
            min_circularity: 0.6,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.min_area <= self.max_area) || self.min_area.is_nan() {
            return Err(Error::invalid("min_area must not exceed max_area"));
        }
        if !(0.0..=1.0).contains(&self.min_circularity) {
            return Err(Error::invalid("min_circularity must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Boolean raster, row-major, same coordinate convention as [`ImagePatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
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

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Foreground where the normalized intensity is strictly above `threshold`.
pub fn binarize(img: &ImagePatch, threshold: f64) -> BinaryImage {
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        img.value(x, y) > threshold
    })
}

/// Foreground where the normalized intensity is strictly below `threshold`.
pub fn binarize_below(img: &ImagePatch, threshold: f64) -> BinaryImage {
    BinaryImage::from_fn(img.width(), img.height(), |x, y| {
        img.value(x, y) < threshold
    })
}

/// Sets every background pixel that is not 4-connected to the image border
/// to foreground.
pub fn fill_holes(binary: &BinaryImage) -> BinaryImage {
    let (w, h) = (binary.width, binary.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed =
        |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
            let i = y * w + x;
            if !binary.data[i] && !outside[i] {
                outside[i] = true;
                queue.push_back((x, y));
            }
        };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        if h > 0 {
            seed(x, h - 1, &mut outside, &mut queue);
        }
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        if w > 0 {
            seed(w - 1, y, &mut outside, &mut queue);
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        if x > 0 {
            seed(x - 1, y, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut outside, &mut queue);
        }
    }
    BinaryImage {
        width: w,
        height: h,
        data: outside.into_iter().map(|o| !o).collect(),
    }
}

/// One 8-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Pixel coordinates in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub perimeter: f64,
}

impl Blob {
    pub fn area(&self) -> f64 {
        self.pixels.len() as f64
    }

    /// `4 pi area / perimeter^2`, clamped to `[0, 1]`. Single pixels count as 1.
    pub fn circularity(&self) -> f64 {
        if self.perimeter <= 0.0 {
            return 1.0;
        }
        (4.0 * PI * self.area() / (self.perimeter * self.perimeter)).min(1.0)
    }

    /// Unweighted mean of the pixel coordinates.
    pub fn centroid(&self) -> Point {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self.pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + x as f64, sy + y as f64)
        });
        Point::new(sx / n, sy / n)
    }
}

const NEIGHBORS8: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Labels 8-connected foreground components, in raster order of their
/// first pixel.
pub fn label_components(binary: &BinaryImage) -> Vec<Blob> {
    let (w, h) = (binary.width, binary.height);
    let mut label = vec![usize::MAX; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !binary.data[start] || label[start] != usize::MAX {
            continue;
        }
        let id = blobs.len();
        let mut pixels = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            pixels.push((x as usize, y as usize));
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if binary.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        let first = pixels[0];
        let perimeter = trace_perimeter(first, |x, y| {
            binary.get_signed(x, y) && label[y as usize * w + x as usize] == id
        });
        blobs.push(Blob { pixels, perimeter });
    }
    blobs
}

/// Length of the outer boundary of a component by Moore-neighbor tracing,
/// counting axial steps as 1 and diagonal steps as sqrt(2). `start` must be
/// the component's first pixel in raster order.
fn trace_perimeter(start: (usize, usize), inside: impl Fn(i64, i64) -> bool) -> f64 {
    let s = (start.0 as i64, start.1 as i64);
    // Neighbor `k` of `c` in clockwise order (image y axis points down).
    let step = |c: (i64, i64), k: usize| (c.0 + NEIGHBORS8[k].0, c.1 + NEIGHBORS8[k].1);
    let next = |c: (i64, i64), back: usize| -> Option<(usize, usize)> {
        (1..=8).map(|i| (back + i) % 8).find_map(|k| {
            let n = step(c, k);
            inside(n.0, n.1).then_some((k, (k + 7) % 8))
        })
    };
    // The west neighbor of the first raster pixel is background.
    let Some((first_dir, first_back)) = next(s, 4) else {
        return 0.0;
    };
    let mut length = 0.0;
    let mut cur = s;
    let (mut dir, mut back_abs) = (first_dir, first_back);
    let limit = 16 * 1024 * 1024;
    for _ in 0..limit {
        length += if dir % 2 == 0 { 1.0 } else { SQRT_2 };
        let prev = cur;
        cur = step(cur, dir);
        // Backtrack neighbor, expressed relative to the new pixel.
        let b = step(prev, back_abs);
        let rel = (b.0 - cur.0, b.1 - cur.1);
        let back = NEIGHBORS8
            .iter()
            .position(|&d| d == rel)
            .unwrap_or((dir + 4) % 8);
        let (d, ba) = next(cur, back).expect("a traced pixel has a neighbor");
        if cur == s && d == first_dir {
            break;
        }
        dir = d;
        back_abs = ba;
    }
    length
}

/// Applies the area and circularity filters and returns the largest
/// survivor (earliest in raster order on ties).
pub fn select_blob(blobs: Vec<Blob>, p: &ThresholdParams) -> Option<Blob> {
    let mut best: Option<Blob> = None;
    for b in blobs {
        let area = b.area();
        if area < p.min_area || area > p.max_area || b.circularity() < p.min_circularity {
            continue;
        }
        if best.as_ref().is_none_or(|cur| area > cur.area()) {
            best = Some(b);
        }
    }
    best
}

/// Hole filling, labeling, filtering and binary centroid on an already
/// binarized image.
pub fn binary_blob_center(binary: &BinaryImage, p: &ThresholdParams) -> Result<Blob> {
    let filled = fill_holes(binary);
    select_blob(label_components(&filled), p)
        .ok_or_else(|| Error::NoCrFound("no blob satisfies the shape and size criteria".into()))
}

pub fn threshold_centroid(img: &ImagePatch, p: &ThresholdParams) -> Result<LocalizationResult> {
    p.validate()?;
    if img.is_empty() {
        return Err(Error::Empty("image has no pixels".into()));
    }
    let blob = binary_blob_center(&binarize(img, p.threshold), p)?;
    let mut res = LocalizationResult::new(blob.centroid(), Method::Threshold);
    res.diagnostics.blob_area = Some(blob.area());
    res.diagnostics.threshold = Some(p.threshold);
    Ok(res)
}

/// Intensity-weighted mean of the pixel-center coordinates.
pub fn intensity_centroid(img: &ImagePatch) -> Result<LocalizationResult> {
    let (mut s, mut sx, mut sy) = (0u64, 0u64, 0u64);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = u64::from(img.level(x, y));
            s += v;
            sx += v * x as u64;
            sy += v * y as u64;
        }
    }
    if s == 0 {
        return Err(Error::UndefinedCenter(
            "image has zero total intensity".into(),
        ));
    }
    let center = Point::new(sx as f64 / s as f64, sy as f64 / s as f64);
    Ok(LocalizationResult::new(center, Method::IntensityCom))
}

/// Best achievable center-of-mass estimate: the CR rendered noise-free on a
/// black background through the full quantization pipeline.
pub fn com_oracle(cr: &CrSpec, width: usize, height: usize) -> Result<LocalizationResult> {
    let sample = render_scene(&SceneSpec::clean(*cr, width, height))?;
    let mut res = intensity_centroid(&sample.image)?;
    res.method = Method::OracleCom;
    Ok(res)
}

/// Zeroes every pixel whose center lies farther than `radius` from `center`.
pub fn apply_circular_mask(img: &ImagePatch, center: Point, radius: f64) -> Result<ImagePatch> {
    if !(radius > 0.0) {
        return Err(Error::invalid("mask radius must be positive"));
    }
    let mut out = img.clone();
    let r2 = radius * radius;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = (x as f64 - center.x, y as f64 - center.y);
            if dx * dx + dy * dy > r2 {
                out.set_level(x, y, 0);
            }
        }
    }
    Ok(out)
}

/// Weighted gradient lines of the radial symmetry method.
///
/// Each midpoint of a 2x2 pixel block carries a line through it along the
/// (3x3 box-smoothed) intensity gradient, with weight
/// `|grad|^2 / distance-to-rough-centroid`.
#[derive(Debug, Clone)]
pub struct GradientLines {
    /// (point, unit direction, weight)
    lines: Vec<(Point, Point, f64)>,
}

impl GradientLines {
    pub fn from_image(img: &ImagePatch) -> Result<Self> {
        let (w, h) = (img.width(), img.height());
        if w < 3 || h < 3 {
            return Err(Error::invalid("radial symmetry needs at least a 3x3 image"));
        }
        let (mw, mh) = (w - 1, h - 1);
        let v: Vec<f64> = img.levels().iter().map(|&l| f64::from(l) / 255.0).collect();
        let mut du = vec![0.0; mw * mh];
        let mut dv = vec![0.0; mw * mh];
        for y in 0..mh {
            let (r0, r1) = (&v[y * w..(y + 1) * w], &v[(y + 1) * w..(y + 2) * w]);
            for x in 0..mw {
                du[y * mw + x] = r1[x + 1] - r0[x];
                dv[y * mw + x] = r0[x + 1] - r1[x];
            }
        }
        let du = box3(&du, mw, mh);
        let dv = box3(&dv, mw, mh);

        let mut mag2 = vec![0.0; mw * mh];
        let mut grad = vec![Point::default(); mw * mh];
        let (mut sw, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for y in 0..mh {
            for x in 0..mw {
                let i = y * mw + x;
                let g = Point::new(0.5 * (du[i] + dv[i]), 0.5 * (du[i] - dv[i]));
                let m2 = g.x * g.x + g.y * g.y;
                grad[i] = g;
                mag2[i] = m2;
                sw += m2;
                cx += m2 * (x as f64 + 0.5);
                cy += m2 * (y as f64 + 0.5);
            }
        }
        if sw <= 0.0 {
            return Err(Error::UndefinedCenter(
                "image has no intensity gradient".into(),
            ));
        }
        let rough = Point::new(cx / sw, cy / sw);

        let mut lines = Vec::with_capacity(mw * mh);
        for y in 0..mh {
            for x in 0..mw {
                let i = y * mw + x;
                if mag2[i] <= 0.0 {
                    continue;
                }
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                let dist = p.distance(rough);
                if dist <= 0.0 {
                    continue;
                }
                let norm = mag2[i].sqrt();
                let dir = Point::new(grad[i].x / norm, grad[i].y / norm);
                lines.push((p, dir, mag2[i] / dist));
            }
        }
        Ok(Self { lines })
    }

    /// `sum_k w_k d_k(c)^2`, with `d_k` the perpendicular distance from `c`
    /// to line `k`.
    pub fn objective(&self, c: Point) -> f64 {
        self.lines
            .iter()
            .map(|&(p, dir, w)| {
                let q = c - p;
                let cross = q.x * dir.y - q.y * dir.x;
                w * cross * cross
            })
            .sum()
    }

    /// Closed-form minimizer of [`Self::objective`].
    pub fn solve(&self) -> Result<Point> {
        // Normal equations: sum w (I - u u^T) c = sum w (I - u u^T) p.
        let (mut a11, mut a12, mut a22, mut b1, mut b2, mut sw) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &(p, u, w) in &self.lines {
            let m11 = w * (1.0 - u.x * u.x);
            let m12 = -w * u.x * u.y;
            let m22 = w * (1.0 - u.y * u.y);
            a11 += m11;
            a12 += m12;
            a22 += m22;
            b1 += m11 * p.x + m12 * p.y;
            b2 += m12 * p.x + m22 * p.y;
            sw += w;
        }
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 1e-12 * sw * sw) || !det.is_finite() {
            return Err(Error::UndefinedCenter(
                "gradient lines do not intersect".into(),
            ));
        }
        Ok(Point::new(
            (a22 * b1 - a12 * b2) / det,
            (a11 * b2 - a12 * b1) / det,
        ))
    }
}

/// 3x3 mean filter with zero padding, output the same size as the input.
/// Computed as a horizontal then a vertical 3-tap sum.
fn box3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let r = &src[y * w..(y + 1) * w];
        let o = &mut rows[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = r[x];
            if x > 0 {
                s += r[x - 1];
            }
            if x + 1 < w {
                s += r[x + 1];
            }
            o[x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = rows[y * w + x];
            if y > 0 {
                s += rows[(y - 1) * w + x];
            }
            if y + 1 < h {
                s += rows[(y + 1) * w + x];
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}

pub fn radial_symmetry_center(img: &ImagePatch) -> Result<LocalizationResult> {
    let lines = GradientLines::from_image(img)?;
    let c = lines.solve()?;
    let mut res = LocalizationResult::new(c, Method::RadialSymmetry);
    let sw: f64 = lines.lines.iter().map(|l| l.2).sum();
    res.diagnostics.residual = Some(lines.objective(c) / sw);
    Ok(res)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Thresholding(pub ThresholdParams);

impl Localizer for Thresholding {
    fn method(&self) -> Method {
        Method::Threshold
    }
    fn locate(&self, img: &ImagePatch) -> Result<LocalizationResult> {
        threshold_centroid(img, &self.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RadialSymmetry;

impl Localizer for RadialSymmetry {
    fn method(&self) -> Method {
        Method::RadialSymmetry
    }
    fn locate(&self, img: &ImagePatch) -> Result<LocalizationResult> {
        radial_symmetry_center(img)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntensityCentroid;

impl Localizer for IntensityCentroid {
    fn method(&self) -> Method {
        Method::IntensityCom
    }
    fn locate(&self, img: &ImagePatch) -> Result<LocalizationResult> {
        intensity_centroid(img)
    }
}

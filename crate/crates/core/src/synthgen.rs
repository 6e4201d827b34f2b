//! Synthetic corneal-reflection images.
//!
//! A scene is rendered on a working raster in 8-bit intensity units:
//!
//! 1. CR field `255 * G(x, y)` with `G = A exp(-d^2 / (2 sigma_w^2))`,
//!    sampled at pixel centers;
//! 2. two-section background with a raised-cosine transition;
//! 3. composite `max(CR, background)`;
//! 4. i.i.d. Gaussian noise `N(0, sigma_n^2)` per pixel (row-major draw order);
//! 5. clamp to `[0, 255]`;
//! 6. rounding onto the 256-level grid.
//!
//! `sigma_w` is derived from the saturated radius `r` so that `G = 1`
//! exactly at distance `r` from the center, whatever the amplitude.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::{quantize, ImagePatch};
use crate::seed;
use crate::{Error, Result};

/// Gaussian width for a CR whose saturated disk has radius `r` at amplitude `a`.
///
/// `sigma_w = r / sqrt(2 ln a)`; requires `r > 0` and `a > 1`.
pub fn sigma_from_radius(r: f64, a: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    if !(a > 1.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "amplitude must exceed 1 for a saturated CR, got {a}"
        )));
    }
    Ok(r / (2.0 * a.ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrSpec {
    pub center: Point,
    /// Radius of the saturated disk in pixels.
    pub radius: f64,
    /// Gaussian peak in saturation units (saturation = 1).
    pub amplitude: f64,
}

impl CrSpec {
    pub fn new(center: Point, radius: f64, amplitude: f64) -> Result<Self> {
        let spec = Self {
            center,
            radius,
            amplitude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        sigma_from_radius(self.radius, self.amplitude)?;
        if !self.center.is_finite() {
            return Err(Error::invalid("CR center must be finite"));
        }
        Ok(())
    }

    pub fn sigma_w(&self) -> Result<f64> {
        sigma_from_radius(self.radius, self.amplitude)
    }

    /// The continuous Gaussian `G(p)` in saturation units (before clamping).
    pub fn field_at(&self, p: Point) -> Result<f64> {
        let s = self.sigma_w()?;
        Ok(gaussian(self.amplitude, s, p - self.center))
    }
}

#[inline]
fn gaussian(a: f64, sigma: f64, d: Point) -> f64 {
    a * (-(d.x * d.x + d.y * d.y) / (2.0 * sigma * sigma)).exp()
}

/// Two-section background split by a straight line.
///
/// The light section lies on the side of the line pointed to by the normal
/// `(-sin(angle), cos(angle))`; for a vertical line (`angle = pi/2`) that is
/// the left side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    /// When false the background is fully black.
    pub present: bool,
    pub line_point: Point,
    /// Line direction in radians, `[0, 2 pi)`.
    pub line_angle: f64,
    /// 8-bit level of the dark section.
    pub dark_intensity: f64,
    /// 8-bit level of the light section.
    pub light_intensity: f64,
    /// Width of the raised-cosine transition in pixels.
    pub edge_width: f64,
}

impl BackgroundSpec {
    pub const DEFAULT_EDGE_WIDTH: f64 = 4.0;

    pub fn black() -> Self {
        Self {
            present: false,
            line_point: Point::default(),
            line_angle: 0.0,
            dark_intensity: 0.0,
            light_intensity: 0.0,
            edge_width: Self::DEFAULT_EDGE_WIDTH,
        }
    }

    /// Vertical dividing line through `x = line_x`, light section on the left.
    pub fn vertical(line_x: f64, dark: f64, light: f64) -> Self {
        Self {
            present: true,
            line_point: Point::new(line_x, 0.0),
            line_angle: PI / 2.0,
            dark_intensity: dark,
            light_intensity: light,
            edge_width: Self::DEFAULT_EDGE_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.present {
            return Ok(());
        }
        if !(self.dark_intensity > 0.0
            && self.dark_intensity <= self.light_intensity
            && self.light_intensity <= 255.0)
        {
            return Err(Error::invalid(format!(
                "background levels must satisfy 0 < dark ({}) <= light ({}) <= 255",
                self.dark_intensity, self.light_intensity
            )));
        }
        if !(self.edge_width >= 0.0) {
            return Err(Error::invalid("edge width must be non-negative"));
        }
        if !self.line_point.is_finite() || !self.line_angle.is_finite() {
            return Err(Error::invalid("dividing line must be finite"));
        }
        Ok(())
    }

    fn normal(&self) -> Point {
        let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
        Point::new(snap(-self.line_angle.sin()), snap(self.line_angle.cos()))
    }

    /// Background level (8-bit units) at `p`.
    pub fn intensity_at(&self, p: Point) -> f64 {
        if !self.present {
            return 0.0;
        }
        self.intensity_with_normal(self.normal(), p)
    }

    fn intensity_with_normal(&self, n: Point, p: Point) -> f64 {
        let q = p - self.line_point;
        let d = q.x * n.x + q.y * n.y;
        self.profile(d)
    }

    fn profile(&self, d: f64) -> f64 {
        let (dark, light) = (self.dark_intensity, self.light_intensity);
        let half = self.edge_width / 2.0;
        if d >= half && d > 0.0 {
            light
        } else if d <= -half && d < 0.0 {
            dark
        } else if self.edge_width == 0.0 {
            0.5 * (dark + light)
        } else {
            dark + (light - dark) * (1.0 + (PI * d / self.edge_width).sin()) / 2.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation in 8-bit levels.
    pub sigma_n: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            sigma_n: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub cr: CrSpec,
    pub background: BackgroundSpec,
    pub noise: NoiseSpec,
    pub width: usize,
    pub height: usize,
}

impl SceneSpec {
    /// A CR on a black, noise-free `width x height` image.
    pub fn clean(cr: CrSpec, width: usize, height: usize) -> Self {
        Self {
            cr,
            background: BackgroundSpec::black(),
            noise: NoiseSpec::none(),
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        self.cr.validate()?;
        let probe = ImagePatch::new(self.width, self.height);
        if !probe.contains(self.cr.center, 0.0) {
            return Err(Error::invalid(format!(
                "CR center ({}, {}) outside the {}x{} image",
                self.cr.center.x, self.cr.center.y, self.width, self.height
            )));
        }
        self.background.validate()?;
        if !(self.noise.sigma_n >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        Ok(())
    }
}

/// A rendered image with its ground-truth CR center.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: ImagePatch,
    pub truth: Point,
    pub scene: SceneSpec,
}

/// Composite field `max(255 G, background)` in 8-bit units, before noise,
/// clamping and quantization. Row-major.
pub fn render_field(spec: &SceneSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let sigma = spec.cr.sigma_w()?;
    let bg_spec = &spec.background;
    let normal = bg_spec.normal();
    // The Gaussian is separable: G = A gx(x) gy(y).
    let axis = |n: usize, c: f64| -> Vec<f64> {
        (0..n)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect()
    };
    let gx = axis(spec.width, spec.cr.center.x);
    let gy = axis(spec.height, spec.cr.center.y);
    let mut field = Vec::with_capacity(spec.width * spec.height);
    for (y, gy) in gy.iter().enumerate() {
        for (x, gx) in gx.iter().enumerate() {
            let p = Point::new(x as f64, y as f64);
            let cr = 255.0 * spec.cr.amplitude * gx * gy;
            let bg = if bg_spec.present {
                bg_spec.intensity_with_normal(normal, p)
            } else {
                0.0
            };
            field.push(cr.max(bg));
        }
    }
    Ok(field)
}

/// Adds noise to an 8-bit-unit field, clamps and quantizes it.
pub fn finish_image(
    width: usize,
    height: usize,
    mut field: Vec<f64>,
    noise: &NoiseSpec,
) -> ImagePatch {
    if noise.sigma_n > 0.0 {
        let mut rng = seed::rng(noise.seed);
        for v in field.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise.sigma_n * z;
        }
    }
    let levels = field.into_iter().map(quantize).collect();
    ImagePatch::from_levels(width, height, levels).expect("field size matches dimensions")
}

pub fn render_scene(spec: &SceneSpec) -> Result<LabeledSample> {
    let field = render_field(spec)?;
    let image = finish_image(spec.width, spec.height, field, &spec.noise);
    Ok(LabeledSample {
        image,
        truth: spec.cr.center,
        scene: *spec,
    })
}

/// Renders only a background (no CR), through the same noise/quantization path.
pub fn render_background(
    background: &BackgroundSpec,
    noise: &NoiseSpec,
    width: usize,
    height: usize,
) -> Result<ImagePatch> {
    background.validate()?;
    let mut field = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            field.push(background.intensity_at(Point::new(x as f64, y as f64)));
        }
    }
    Ok(finish_image(width, height, field, noise))
}

/// Training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Stage {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            _ => Err(Error::invalid(format!("stage must be 1 or 2, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// Sampling laws for training scenes.
///
/// Stage 1 draws CR centers uniformly from `[r, size - r]` on both axes;
/// stage 2 draws them uniformly from a `stage2_span`-wide interval centered
/// on the image's geometric center. Every other law is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDistributions {
    pub image_size: usize,
    pub radius_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub stage2_span: f64,
    pub sigma_n_range: (f64, f64),
    pub light_intensity_range: (f64, f64),
    /// Dark level = `Exp(scale) + offset`, redrawn while above the light level.
    pub dark_scale: f64,
    pub dark_offset: f64,
    /// Per-axis standard deviation of the dividing-line point, in CR radii.
    pub line_point_std: f64,
    pub line_angle_range: (f64, f64),
    pub edge_width: f64,
}

impl Default for StageDistributions {
    fn default() -> Self {
        Self::with_size(180)
    }
}

impl StageDistributions {
    pub fn with_size(image_size: usize) -> Self {
        Self {
            image_size,
            radius_range: (1.0, 30.0),
            amplitude_range: (2.0, 20_000.0),
            stage2_span: 1.5,
            sigma_n_range: (0.0, 30.0),
            light_intensity_range: (32.0, 153.0),
            dark_scale: 10.0,
            dark_offset: 1.0,
            line_point_std: 1.5,
            line_angle_range: (0.0, TAU),
            edge_width: BackgroundSpec::DEFAULT_EDGE_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name}: bad range [{lo}, {hi}]")))
            }
        };
        ordered("radius_range", self.radius_range)?;
        ordered("amplitude_range", self.amplitude_range)?;
        ordered("sigma_n_range", self.sigma_n_range)?;
        ordered("light_intensity_range", self.light_intensity_range)?;
        ordered("line_angle_range", self.line_angle_range)?;
        if self.radius_range.0 <= 0.0 {
            return Err(Error::invalid("radius_range must be positive"));
        }
        if 2.0 * self.radius_range.1 >= self.image_size as f64 {
            return Err(Error::invalid(format!(
                "radius up to {} leaves no valid center range in a {}-px image",
                self.radius_range.1, self.image_size
            )));
        }
        if self.amplitude_range.0 <= 1.0 {
            return Err(Error::invalid("amplitude_range must exceed 1"));
        }
        if self.sigma_n_range.0 < 0.0 {
            return Err(Error::invalid("sigma_n_range must be non-negative"));
        }
        if self.light_intensity_range.1 > 255.0 || self.light_intensity_range.0 < self.dark_offset {
            return Err(Error::invalid(
                "light_intensity_range must lie within [dark_offset, 255]",
            ));
        }
        if !(self.dark_scale > 0.0) || !(self.dark_offset > 0.0) {
            return Err(Error::invalid("dark law needs positive scale and offset"));
        }
        if !(self.stage2_span > 0.0) || !(self.line_point_std >= 0.0) || !(self.edge_width >= 0.0) {
            return Err(Error::invalid(
                "stage2_span, line_point_std, edge_width out of range",
            ));
        }
        Ok(())
    }

    /// Geometric image center for this size.
    pub fn image_center(&self) -> f64 {
        (self.image_size as f64 - 1.0) / 2.0
    }
}

fn uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample_scene(dist: &StageDistributions, stage: Stage, rng_seed: u64) -> Result<SceneSpec> {
    dist.validate()?;
    let mut rng = seed::rng(rng_seed);
    let size = dist.image_size as f64;

    let r = uniform(&mut rng, dist.radius_range);
    let amplitude = uniform(&mut rng, dist.amplitude_range);
    let center_range = match stage {
        Stage::One => (r, size - r),
        Stage::Two => {
            let c = dist.image_center();
            (c - dist.stage2_span / 2.0, c + dist.stage2_span / 2.0)
        }
    };
    let cx = uniform(&mut rng, center_range);
    let cy = uniform(&mut rng, center_range);
    let sigma_n = uniform(&mut rng, dist.sigma_n_range);
    let light = uniform(&mut rng, dist.light_intensity_range);

    let exp = Exp::new(1.0 / dist.dark_scale).map_err(|e| Error::invalid(e.to_string()))?;
    let ceiling = light.min(255.0);
    let dark = loop {
        let d = exp.sample(&mut rng) + dist.dark_offset;
        if d <= ceiling {
            break d;
        }
    };

    let spread =
        Normal::new(0.0, dist.line_point_std * r).map_err(|e| Error::invalid(e.to_string()))?;
    let line_point = Point::new(cx + spread.sample(&mut rng), cy + spread.sample(&mut rng));
    let (a0, a1) = dist.line_angle_range;
    let line_angle = if a0 == a1 {
        a0
    } else {
        rng.random_range(a0..a1)
    };
    let noise_seed: u64 = rng.random();

    let spec = SceneSpec {
        cr: CrSpec {
            center: Point::new(cx, cy),
            radius: r,
            amplitude,
        },
        background: BackgroundSpec {
            present: true,
            line_point,
            line_angle,
            dark_intensity: dark,
            light_intensity: light,
            edge_width: dist.edge_width,
        },
        noise: NoiseSpec {
            sigma_n,
            seed: noise_seed,
        },
        width: dist.image_size,
        height: dist.image_size,
    };
    spec.validate()?;
    Ok(spec)
}

/// Broad training distribution: CR centers anywhere in `[r, size - r]`.
pub fn sample_stage1(dist: &StageDistributions, rng_seed: u64) -> Result<SceneSpec> {
    sample_scene(dist, Stage::One, rng_seed)
}

/// Fine-tuning distribution: CR centers within `stage2_span` of the image center.
pub fn sample_stage2(dist: &StageDistributions, rng_seed: u64) -> Result<SceneSpec> {
    sample_scene(dist, Stage::Two, rng_seed)
}

pub fn sample_stage(dist: &StageDistributions, stage: Stage, rng_seed: u64) -> Result<SceneSpec> {
    sample_scene(dist, stage, rng_seed)
}

/// Position of the gray background section relative to the CR, in CR radii.
/// `None` means no gray section (fully black background).
pub type EdgeOffset = Option<f64>;

/// One point of the evaluation parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTuple {
    pub radius: f64,
    pub amplitude: f64,
    pub sigma_n: f64,
    pub edge: EdgeOffset,
    pub light: f64,
}

/// Dark-section level used for evaluation scenes with a gray section.
pub const EVAL_DARK_LEVEL: f64 = 1.0;

impl EvalTuple {
    /// Scene with the CR at `center`; a gray section, when present, lies left
    /// of a vertical line at `x = center.x + edge * r`.
    pub fn scene(&self, center: Point, size: usize, noise_seed: u64) -> SceneSpec {
        let background = match self.edge {
            None => BackgroundSpec::black(),
            Some(e) => {
                BackgroundSpec::vertical(center.x + e * self.radius, EVAL_DARK_LEVEL, self.light)
            }
        };
        SceneSpec {
            cr: CrSpec {
                center,
                radius: self.radius,
                amplitude: self.amplitude,
            },
            background,
            noise: NoiseSpec {
                sigma_n: self.sigma_n,
                seed: noise_seed,
            },
            width: size,
            height: size,
        }
    }
}

/// The evaluation grid: a Cartesian product over five parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalGrid {
    pub radii: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub noise_levels: Vec<f64>,
    pub edges: Vec<EdgeOffset>,
    pub light_levels: Vec<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        build_eval_grid()
    }
}

/// Per-dimension subsampling strides, in grid order (r, A, sigma_n, E, I).
pub type GridStride = [usize; 5];

impl EvalGrid {
    /// Grid dimensions in iteration order.
    pub fn shape(&self) -> [usize; 5] {
        [
            self.radii.len(),
            self.amplitudes.len(),
            self.noise_levels.len(),
            self.edges.len(),
            self.light_levels.len(),
        ]
    }

    /// Every `stride`-th value per dimension starting at the first, with `r`
    /// varying slowest and `I` fastest.
    pub fn tuples(&self, stride: GridStride) -> Result<Vec<EvalTuple>> {
        if stride.contains(&0) {
            return Err(Error::invalid("grid strides must be at least 1"));
        }
        let pick = |v: &[f64], s: usize| v.iter().copied().step_by(s).collect::<Vec<_>>();
        let edges: Vec<EdgeOffset> = self.edges.iter().copied().step_by(stride[3]).collect();
        let mut out = Vec::new();
        for &radius in &pick(&self.radii, stride[0]) {
            for &amplitude in &pick(&self.amplitudes, stride[1]) {
                for &sigma_n in &pick(&self.noise_levels, stride[2]) {
                    for &edge in &edges {
                        for &light in &pick(&self.light_levels, stride[4]) {
                            out.push(EvalTuple {
                                radius,
                                amplitude,
                                sigma_n,
                                edge,
                                light,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The published evaluation grid.
pub fn build_eval_grid() -> EvalGrid {
    EvalGrid {
        radii: (1..=9).map(|k| 2.0 * k as f64).collect(),
        amplitudes: vec![10.0, 50.0, 200.0, 1000.0, 10000.0],
        noise_levels: (0..10).map(|k| 2.0 * k as f64).collect(),
        edges: vec![
            None,
            Some(-1.5),
            Some(-1.0),
            Some(-0.5),
            Some(0.0),
            Some(0.5),
            Some(1.0),
            Some(1.5),
        ],
        light_levels: vec![
            38.0, 51.0, 64.0, 77.0, 89.0, 102.0, 115.0, 128.0, 140.0, 153.0,
        ],
    }
}

/// A filled disk of uniform level, used for pupil and iris.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
    /// 8-bit level.
    pub intensity: f64,
}

impl Disk {
    fn covers(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius
    }
}

/// A schematic full eye frame: sclera, iris and pupil disks plus one CR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeFrameSpec {
    pub width: usize,
    pub height: usize,
    /// Sclera (surround) level.
    pub sclera: f64,
    pub iris: Disk,
    pub pupil: Disk,
    pub cr: CrSpec,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EyeFrame {
    pub image: ImagePatch,
    pub cr_truth: Point,
    pub pupil_truth: Point,
}

/// Renders a frame: sclera, then iris, then pupil, then `max` with the CR
/// field, then the usual noise/clamp/quantize steps.
pub fn synth_eye_frame(spec: &EyeFrameSpec) -> Result<EyeFrame> {
    let probe = ImagePatch::new(spec.width, spec.height);
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::invalid("frame size must be positive"));
    }
    if !probe.contains(spec.cr.center, 0.0) {
        return Err(Error::invalid("CR center outside the frame"));
    }
    if !probe.contains(spec.pupil.center, 0.0) {
        return Err(Error::invalid("pupil center outside the frame"));
    }
    let sigma = spec.cr.sigma_w()?;
    let mut field = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let p = Point::new(x as f64, y as f64);
            let mut bg = spec.sclera;
            if spec.iris.covers(p) {
                bg = spec.iris.intensity;
            }
            if spec.pupil.covers(p) {
                bg = spec.pupil.intensity;
            }
            let cr = 255.0 * gaussian(spec.cr.amplitude, sigma, p - spec.cr.center);
            field.push(cr.max(bg));
        }
    }
    Ok(EyeFrame {
        image: finish_image(spec.width, spec.height, field, &spec.noise),
        cr_truth: spec.cr.center,
        pupil_truth: spec.pupil.center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigma_identity_at_half_log() {
        let r0 = 3.7;
        let s = sigma_from_radius(r0, 0.5f64.exp()).unwrap();
        assert!((s - r0).abs() < 1e-15);
    }

    #[test]
    fn sigma_reference_value() {
        // r / sqrt(2 ln 10) with r = 2, evaluated independently at high precision.
        let s = sigma_from_radius(2.0, 10.0).unwrap();
        assert!((s - 0.931_981_203_569_312).abs() < 1e-12, "{s}");
    }

    #[test]
    fn sigma_rejects_unit_amplitude() {
        assert!(matches!(sigma_from_radius(5.0, 1.0), Err(Error::Domain(_))));
        assert!(sigma_from_radius(5.0, 0.5).is_err());
        assert!(sigma_from_radius(0.0, 10.0).is_err());
    }

    #[test]
    fn saturated_disk_is_white() {
        let c = Point::new(40.3, 38.8);
        let cr = CrSpec::new(c, 7.0, 10_000.0).unwrap();
        let img = render_scene(&SceneSpec::clean(cr, 80, 80)).unwrap().image;
        for y in 0..80 {
            for x in 0..80 {
                if Point::new(x as f64, y as f64).distance(c) < 7.0 {
                    assert_eq!(img.level(x, y), 255);
                }
            }
        }
    }

    #[test]
    fn centered_cr_is_mirror_symmetric() {
        let cr = CrSpec::new(Point::new(31.5, 31.5), 5.0, 200.0).unwrap();
        let img = render_scene(&SceneSpec::clean(cr, 64, 64)).unwrap().image;
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(img.level(x, y), img.level(63 - x, y));
                assert_eq!(img.level(x, y), img.level(x, 63 - y));
            }
        }
    }

    #[test]
    fn raised_cosine_edge() {
        // Vertical edge at x = 20 with the light side on the right.
        let bg = BackgroundSpec {
            present: true,
            line_point: Point::new(20.0, 0.0),
            line_angle: -PI / 2.0,
            dark_intensity: 10.0,
            light_intensity: 128.0,
            edge_width: 4.0,
        };
        let img = render_background(&bg, &NoiseSpec::none(), 40, 4).unwrap();
        assert_eq!(img.level(0, 2), 10);
        assert_eq!(img.level(39, 2), 128);
        assert_eq!(img.level(17, 1), 10);
        assert_eq!(img.level(23, 1), 128);
        let row: Vec<u8> = (0..40).map(|x| img.level(x, 0)).collect();
        assert!(row.windows(2).all(|w| w[0] <= w[1]));
        // Strictly inside the 4-pixel ramp.
        for v in &row[19..=21] {
            assert!(*v > 10 && *v < 128, "{row:?}");
        }
        assert_eq!(img.level(20, 0), quantize(69.0));
    }

    #[test]
    fn vertical_background_is_light_on_left() {
        let bg = BackgroundSpec::vertical(10.0, 1.0, 100.0);
        assert_eq!(bg.intensity_at(Point::new(0.0, 3.0)), 100.0);
        assert_eq!(bg.intensity_at(Point::new(20.0, 3.0)), 1.0);
    }

    #[test]
    fn render_is_deterministic() {
        let dist = StageDistributions::with_size(64);
        let spec = sample_stage1(
            &StageDistributions {
                radius_range: (1.0, 20.0),
                ..dist
            },
            9,
        )
        .unwrap();
        let a = render_scene(&spec).unwrap();
        let b = render_scene(&spec).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn stage1_ranges() {
        let dist = StageDistributions::default();
        let mut amp_sum = 0.0;
        let n = 10_000;
        for i in 0..n {
            let s = sample_stage1(&dist, seed::derive_seed(1, seed::Domain::Dataset, i)).unwrap();
            let r = s.cr.radius;
            assert!((1.0..=30.0).contains(&r));
            assert!(s.cr.center.x >= r && s.cr.center.x <= 180.0 - r);
            assert!(s.cr.center.y >= r && s.cr.center.y <= 180.0 - r);
            assert!((2.0..=20_000.0).contains(&s.cr.amplitude));
            assert!(s.background.dark_intensity >= 1.0);
            assert!(s.background.dark_intensity <= s.background.light_intensity);
            assert!((32.0..=153.0).contains(&s.background.light_intensity));
            assert!((0.0..=30.0).contains(&s.noise.sigma_n));
            assert!((0.0..TAU).contains(&s.background.line_angle));
            amp_sum += s.cr.amplitude;
        }
        let mean = amp_sum / n as f64;
        assert!((mean - 10_001.0).abs() < 0.05 * 10_001.0, "{mean}");
    }

    #[test]
    fn stage2_centers() {
        let dist = StageDistributions::default();
        for i in 0..10_000 {
            let s = sample_stage2(&dist, seed::derive_seed(2, seed::Domain::Dataset, i)).unwrap();
            assert!((s.cr.center.x - 89.5).abs() <= 0.75);
            assert!((s.cr.center.y - 89.5).abs() <= 0.75);
            assert!((1.0..=30.0).contains(&s.cr.radius));
        }
        assert_eq!(
            sample_stage2(&dist, 5).unwrap(),
            sample_stage2(&dist, 5).unwrap()
        );
    }

    #[test]
    fn full_grid_count() {
        let grid = build_eval_grid();
        assert_eq!(grid.tuples([1; 5]).unwrap().len(), 9 * 5 * 10 * 8 * 10);
        assert_eq!(grid.len(), 36_000);
        assert_eq!(grid.tuples([2; 5]).unwrap().len(), 5 * 3 * 5 * 4 * 5);
        assert!(grid.tuples([1, 0, 1, 1, 1]).is_err());
    }

    #[test]
    fn edge_offsets_place_the_line() {
        let c = Point::new(89.5, 89.5);
        let mk = |e| EvalTuple {
            radius: 6.0,
            amplitude: 10.0,
            sigma_n: 0.0,
            edge: e,
            light: 128.0,
        };
        assert_eq!(mk(Some(0.0)).scene(c, 180, 0).background.line_point.x, 89.5);
        assert_eq!(
            mk(Some(-1.0)).scene(c, 180, 0).background.line_point.x,
            83.5
        );
        assert!(!mk(None).scene(c, 180, 0).background.present);
    }

    fn eye(cr_center: Point) -> EyeFrameSpec {
        EyeFrameSpec {
            width: 200,
            height: 160,
            sclera: 180.0,
            iris: Disk {
                center: Point::new(100.0, 80.0),
                radius: 60.0,
                intensity: 100.0,
            },
            pupil: Disk {
                center: Point::new(100.0, 80.0),
                radius: 30.0,
                intensity: 20.0,
            },
            cr: CrSpec {
                center: cr_center,
                radius: 4.0,
                amplitude: 1000.0,
            },
            noise: NoiseSpec::none(),
        }
    }

    #[test]
    fn eye_frame_layers() {
        let f = synth_eye_frame(&eye(Point::new(95.0, 75.0))).unwrap();
        // Pupil darker than iris, iris darker than sclera.
        assert!(f.image.level(100, 100) < f.image.level(100, 130));
        assert!(f.image.level(100, 130) < f.image.level(100, 150));
        // CR entirely inside the pupil sits on a uniform dark surround.
        for (x, y) in [(85, 75), (105, 75), (95, 65), (95, 85)] {
            assert_eq!(f.image.level(x, y), 20);
        }
        assert_eq!(f.cr_truth, Point::new(95.0, 75.0));
        assert_eq!(f.pupil_truth, Point::new(100.0, 80.0));
    }

    #[test]
    fn eye_frame_straddling_cr_sees_two_levels() {
        let f = synth_eye_frame(&eye(Point::new(130.0, 80.0))).unwrap();
        assert_eq!(f.image.level(120, 80), 20);
        assert_eq!(f.image.level(140, 80), 100);
    }

    #[test]
    fn eye_frame_rejects_outside_cr() {
        assert!(synth_eye_frame(&eye(Point::new(250.0, 80.0))).is_err());
    }

    proptest! {
        #[test]
        fn sigma_identity(r in 0.5f64..40.0, a in 1.001f64..1e5) {
            let cr = CrSpec::new(Point::new(0.0, 0.0), r, a).unwrap();
            let g = cr.field_at(Point::new(r * 0.6, r * 0.8)).unwrap();
            prop_assert!((g - 1.0).abs() < 1e-12);
        }

        #[test]
        fn quantization_closure(seed in any::<u64>()) {
            let dist = StageDistributions { radius_range: (1.0, 10.0), ..StageDistributions::with_size(32) };
            let s = render_scene(&sample_stage1(&dist, seed).unwrap()).unwrap();
            for v in s.image.values() {
                let k = (v * 255.0).round();
                prop_assert!((v - k / 255.0).abs() < 1e-15);
            }
        }

        #[test]
        fn intensity_decreases_with_distance(cx in 10.0f64..22.0, cy in 10.0f64..22.0, r in 1.0f64..6.0, a in 2.0f64..20000.0) {
            let c = Point::new(cx, cy);
            let img = render_scene(&SceneSpec::clean(CrSpec::new(c, r, a).unwrap(), 32, 32)).unwrap().image;
            let mut px: Vec<(f64, u8)> = (0..32 * 32)
                .map(|i| (Point::new((i % 32) as f64, (i / 32) as f64).distance(c), img.levels()[i]))
                .collect();
            px.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(px.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }
}

//! Coarse-to-fine CR localization on full eye frames.
//!
//! 1. Coarse detection inside the ROI: the CR is the selected bright blob
//!    above `cr.threshold`, the pupil the selected dark blob below
//!    `pupil.threshold`; both are hole-filled and their binary centroids
//!    returned.
//! 2. Refinement: a `cutout_size` square is cut out around the coarse CR
//!    center, everything farther than `mask_radius` from the cutout center is
//!    blacked out, and the configured refiner runs on the masked cutout.
//!
//! With `downsample = 2` the frame is first reduced by 2x2 box averaging;
//! the ROI, area bounds and mask radius are scaled to the half-resolution
//! frame, the cutout size is kept (it is the refiner's input size) and all
//! reported coordinates are mapped back to full-resolution pixels.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::{quantize, ImagePatch};
use crate::localize::{
    apply_circular_mask, binarize, binarize_below, binary_blob_center, radial_symmetry_center,
    Localizer, ThresholdParams,
};
use crate::metrics::window_rms_s2s;
use crate::neural::CnnLocalizer;
use crate::{Error, Result};

/// Axis-aligned analysis region in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            width,
            height,
        }
    }

    fn halved(&self) -> Self {
        Self {
            x: self.x / 2,
            y: self.y / 2,
            width: self.width.div_ceil(2),
            height: self.height.div_ceil(2),
        }
    }

    fn clip(&self, width: usize, height: usize) -> Result<Self> {
        if self.x >= width || self.y >= height || self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "ROI {self:?} does not intersect a {width}x{height} frame"
            )));
        }
        Ok(Self {
            x: self.x,
            y: self.y,
            width: self.width.min(width - self.x),
            height: self.height.min(height - self.y),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refiner {
    None,
    RadialSymmetry,
    Cnn,
}

impl Refiner {
    pub fn as_str(self) -> &'static str {
        match self {
            Refiner::None => "none",
            Refiner::RadialSymmetry => "radial_symmetry",
            Refiner::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for Refiner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Refiner::None),
            "radial_symmetry" => Ok(Refiner::RadialSymmetry),
            "cnn" => Ok(Refiner::Cnn),
            _ => Err(Error::invalid(format!("unknown refiner '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// `None` analyzes the whole frame.
    #[serde(default)]
    pub roi: Option<Roi>,
    /// CR: pixels strictly above `cr.threshold` are foreground.
    pub cr: ThresholdParams,
    /// Pupil: pixels strictly below `pupil.threshold` are foreground.
    pub pupil: ThresholdParams,
    pub cutout_size: usize,
    pub mask_radius: f64,
    pub refiner: Refiner,
    /// Model file for `refiner = "cnn"`.
    #[serde(default)]
    pub model_path: Option<std::path::PathBuf>,
    pub downsample: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi: None,
            cr: ThresholdParams {
                threshold: 0.9,
                min_area: 4.0,
                max_area: 2000.0,
                min_circularity: 0.6,
            },
            pupil: ThresholdParams {
                threshold: 0.2,
                min_area: 200.0,
                max_area: 100_000.0,
                min_circularity: 0.6,
            },
            cutout_size: 180,
            mask_radius: 48.0,
            refiner: Refiner::None,
            model_path: None,
            downsample: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.cr.validate()?;
        self.pupil.validate()?;
        if self.cutout_size == 0 {
            return Err(Error::invalid("cutout_size must be positive"));
        }
        if !(self.mask_radius > 0.0 && self.mask_radius < self.cutout_size as f64 / 2.0) {
            return Err(Error::invalid(format!(
                "mask_radius {} must lie in (0, cutout_size / 2)",
                self.mask_radius
            )));
        }
        if !matches!(self.downsample, 1 | 2) {
            return Err(Error::invalid(format!(
                "downsample must be 1 or 2, got {}",
                self.downsample
            )));
        }
        Ok(())
    }

    /// Settings for the half-resolution frame.
    fn at_half_resolution(&self) -> Self {
        let scale_area = |p: ThresholdParams| ThresholdParams {
            min_area: p.min_area / 4.0,
            max_area: p.max_area / 4.0,
            ..p
        };
        Self {
            roi: self.roi.map(|r| r.halved()),
            cr: scale_area(self.cr),
            pupil: scale_area(self.pupil),
            mask_radius: self.mask_radius / 2.0,
            downsample: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameFlags {
    pub pupil_missing: bool,
    pub cr_missing: bool,
    /// The refiner failed and the coarse center was reported instead.
    pub refine_failed: bool,
}

impl FrameFlags {
    /// Compact flag string: `p` pupil missing, `c` CR missing, `r` refinement
    /// fell back; empty when all succeeded.
    pub fn code(&self) -> String {
        let mut s = String::new();
        if self.pupil_missing {
            s.push('p');
        }
        if self.cr_missing {
            s.push('c');
        }
        if self.refine_failed {
            s.push('r');
        }
        s
    }
}

/// Per-frame output; coordinates in full-resolution frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub index: usize,
    pub pupil: Option<Point>,
    /// Thresholding (coarse) CR center.
    pub cr_threshold: Option<Point>,
    /// Refined CR center (equals the coarse center for `Refiner::None`
    /// and on refinement failure).
    pub cr_refined: Option<Point>,
    pub flags: FrameFlags,
}

/// Coarse detection result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coarse {
    pub pupil: Option<Point>,
    pub cr: Option<Point>,
}

/// Pipeline with its (optional) CNN refiner snapshot.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    cnn: Option<CnnLocalizer>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, cnn: Option<CnnLocalizer>) -> Result<Self> {
        cfg.validate()?;
        if cfg.refiner == Refiner::Cnn {
            let Some(c) = &cnn else {
                return Err(Error::invalid("refiner cnn needs a model"));
            };
            let (w, h) = c.input_size();
            if w > cfg.cutout_size
                || h > cfg.cutout_size
                || !(cfg.cutout_size - w).is_multiple_of(2)
                || !(cfg.cutout_size - h).is_multiple_of(2)
            {
                return Err(Error::invalid(format!(
                    "network input {w}x{h} cannot be centered in a {} cutout",
                    cfg.cutout_size
                )));
            }
        }
        Ok(Self { cfg, cnn })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Processes one frame.
    pub fn process_frame(&self, index: usize, frame: &ImagePatch) -> FrameResult {
        if self.cfg.downsample == 2 {
            let half = downsample2(frame);
            let inner = Pipeline {
                cfg: self.cfg.at_half_resolution(),
                cnn: self.cnn.clone(),
            };
            let mut r = inner.process_frame(index, &half);
            let up = |p: Point| Point::new(2.0 * p.x + 0.5, 2.0 * p.y + 0.5);
            r.pupil = r.pupil.map(up);
            r.cr_threshold = r.cr_threshold.map(up);
            r.cr_refined = r.cr_refined.map(up);
            return r;
        }
        let coarse = coarse_detect(frame, &self.cfg);
        let mut flags = FrameFlags {
            pupil_missing: coarse.pupil.is_none(),
            cr_missing: coarse.cr.is_none(),
            refine_failed: false,
        };
        let cr_refined = coarse.cr.map(|c| match self.refine(frame, c) {
            Ok(p) => p,
            Err(_) => {
                flags.refine_failed = true;
                c
            }
        });
        FrameResult {
            index,
            pupil: coarse.pupil,
            cr_threshold: coarse.cr,
            cr_refined,
            flags,
        }
    }

    /// Refines a coarse CR center on a frame at processing resolution.
    pub fn refine(&self, frame: &ImagePatch, coarse: Point) -> Result<Point> {
        let cfg = &self.cfg;
        if cfg.refiner == Refiner::None {
            return Ok(coarse);
        }
        let (x0, y0) = cutout_origin(coarse, cfg.cutout_size);
        let s = cfg.cutout_size;
        let cut = frame.crop(x0, y0, s, s);
        let c = (s as f64 - 1.0) / 2.0;
        let masked = apply_circular_mask(&cut, Point::new(c, c), cfg.mask_radius)?;
        let local = match cfg.refiner {
            Refiner::None => unreachable!(),
            Refiner::RadialSymmetry => radial_symmetry_center(&masked)?.center,
            Refiner::Cnn => {
                self.cnn
                    .as_ref()
                    .ok_or_else(|| Error::invalid("refiner cnn needs a model"))?
                    .locate(&masked)?
                    .center
            }
        };
        if !local.is_finite() {
            return Err(Error::UndefinedCenter(
                "refiner returned a non-finite center".into(),
            ));
        }
        Ok(local + Point::new(x0 as f64, y0 as f64))
    }

    /// Processes frames independently (in parallel); output in input order.
    pub fn process_sequence(&self, frames: &[ImagePatch]) -> Result<Vec<FrameResult>> {
        if let Some(f) = frames.first() {
            if let Some(bad) = frames
                .iter()
                .position(|g| g.width() != f.width() || g.height() != f.height())
            {
                return Err(Error::invalid(format!(
                    "frame {bad} differs in size from frame 0"
                )));
            }
        }
        Ok(frames
            .par_iter()
            .enumerate()
            .map(|(i, f)| self.process_frame(i, f))
            .collect())
    }
}

/// Top-left corner of the `size` cutout whose center lies within half a
/// pixel of `coarse` on each axis.
pub fn cutout_origin(coarse: Point, size: usize) -> (i64, i64) {
    let h = (size as f64 - 1.0) / 2.0;
    ((coarse.x - h).round() as i64, (coarse.y - h).round() as i64)
}

/// Coarse pupil and CR centers (binary centroids) inside the ROI.
pub fn coarse_detect(frame: &ImagePatch, cfg: &PipelineConfig) -> Coarse {
    let roi = match cfg
        .roi
        .unwrap_or(Roi::full(frame.width(), frame.height()))
        .clip(frame.width(), frame.height())
    {
        Ok(r) => r,
        Err(_) => {
            return Coarse {
                pupil: None,
                cr: None,
            }
        }
    };
    let view = frame.crop(roi.x as i64, roi.y as i64, roi.width, roi.height);
    let offset = Point::new(roi.x as f64, roi.y as f64);
    let cr = binary_blob_center(&binarize(&view, cfg.cr.threshold), &cfg.cr)
        .ok()
        .map(|b| b.centroid() + offset);
    let pupil = binary_blob_center(&binarize_below(&view, cfg.pupil.threshold), &cfg.pupil)
        .ok()
        .map(|b| b.centroid() + offset);
    Coarse { pupil, cr }
}

/// 2x2 box average, rounded to the nearest level. An odd trailing row or
/// column is dropped. Half-resolution pixel `(i, j)` covers full-resolution
/// pixels `2i..2i+1`, so its center sits at `2i + 0.5` in full-resolution
/// coordinates.
pub fn downsample2(frame: &ImagePatch) -> ImagePatch {
    let (w, h) = (frame.width() / 2, frame.height() / 2);
    let mut levels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .map(|&(dx, dy)| u32::from(frame.level(2 * x + dx, 2 * y + dy)))
                .sum();
            levels.push(quantize(f64::from(s) / 4.0));
        }
    }
    ImagePatch::from_levels(w, h, levels).expect("consistent size")
}

/// Per-frame table: `frame,t,pupil_x,pupil_y,cr_threshold_x,cr_threshold_y,
/// cr_<refiner>_x,cr_<refiner>_y,flags`. The refined columns are omitted for
/// `Refiner::None`.
pub fn write_frame_table(
    out: &mut impl Write,
    results: &[FrameResult],
    refiner: Refiner,
    frame_rate: f64,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "frame".to_string(),
        "t".into(),
        "pupil_x".into(),
        "pupil_y".into(),
        "cr_threshold_x".into(),
        "cr_threshold_y".into(),
    ];
    if refiner != Refiner::None {
        header.push(format!("cr_{}_x", refiner.as_str()));
        header.push(format!("cr_{}_y", refiner.as_str()));
    }
    header.push("flags".into());
    w.write_record(&header)?;
    let coord = |p: Option<Point>| match p {
        Some(p) => [format!("{:.4}", p.x), format!("{:.4}", p.y)],
        None => [String::new(), String::new()],
    };
    for r in results {
        let mut rec = vec![
            r.index.to_string(),
            format!("{:.6}", r.index as f64 / frame_rate),
        ];
        rec.extend(coord(r.pupil));
        rec.extend(coord(r.cr_threshold));
        if refiner != Refiner::None {
            rec.extend(coord(r.cr_refined));
        }
        rec.push(r.flags.code());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// RMS-S2S of the coarse CR signal over a calibration clip for each
/// candidate CR threshold, with the number of frames where detection failed.
pub fn threshold_sweep(
    frames: &[ImagePatch],
    cfg: &PipelineConfig,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64, usize)>> {
    thresholds
        .iter()
        .map(|&t| {
            let mut c = cfg.clone();
            c.cr.threshold = t;
            c.refiner = Refiner::None;
            let p = Pipeline::new(c, None)?;
            let res = p.process_sequence(frames)?;
            let pts: Vec<Point> = res.iter().filter_map(|r| r.cr_threshold).collect();
            let rms = if pts.len() >= 2 {
                window_rms_s2s(&pts)
            } else {
                f64::NAN
            };
            Ok((t, rms, frames.len() - pts.len()))
        })
        .collect()
}

//! Synthetic accuracy and precision harness.
//!
//! A sweep moves the CR horizontally across one pixel in 100 steps of
//! 0.01 px, starting half a pixel left of the patch center, and records the
//! signed x error of a localizer at every step. A gray background section,
//! when present, stays at a fixed offset `E * r` from the CR center.
//!
//! Noise realizations depend on `(seed, tuple, step)` only, so every method
//! sees identical noisy images (paired comparison).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::localize::{
    com_oracle, IntensityCentroid, Localizer, Method, RadialSymmetry, ThresholdParams, Thresholding,
};
use crate::neural::CnnLocalizer;
use crate::seed::{self, Domain};
use crate::synthgen::{render_scene, EvalGrid, EvalTuple, GridStride, LabeledSample};
use crate::{Error, Result};

pub const SWEEP_STEPS: usize = 100;
pub const SWEEP_STEP: f64 = 0.01;
/// Patch side used by the synthetic evaluation.
pub const EVAL_PATCH_SIZE: usize = 180;

/// The localizers available to the harness.
#[derive(Debug, Clone, Default)]
pub struct Localizers {
    pub threshold: ThresholdParams,
    pub cnn: Option<CnnLocalizer>,
}

impl Localizers {
    pub fn new(threshold: ThresholdParams, cnn: Option<CnnLocalizer>) -> Self {
        Self { threshold, cnn }
    }

    pub fn check(&self, methods: &[Method]) -> Result<()> {
        self.threshold.validate()?;
        if methods.contains(&Method::Cnn) && self.cnn.is_none() {
            return Err(Error::invalid("method cnn needs a trained model"));
        }
        Ok(())
    }

    /// Center estimate for one rendered sample. The oracle ignores the image
    /// and uses the noise-free render of the sample's CR.
    pub fn locate(&self, method: Method, sample: &LabeledSample) -> Result<Point> {
        let img = &sample.image;
        let r = match method {
            Method::Threshold => Thresholding(self.threshold).locate(img)?,
            Method::RadialSymmetry => RadialSymmetry.locate(img)?,
            Method::IntensityCom => IntensityCentroid.locate(img)?,
            Method::Cnn => self
                .cnn
                .as_ref()
                .ok_or_else(|| Error::invalid("method cnn needs a trained model"))?
                .locate(img)?,
            Method::OracleCom => com_oracle(&sample.scene.cr, img.width(), img.height())?,
        };
        Ok(r.center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean |error| over successful steps (NaN if none succeeded).
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Mean signed error.
    pub bias: f64,
    pub fail_count: usize,
}

impl Summary {
    pub fn of(errors: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = errors.iter().flatten().copied().collect();
        let n = ok.len() as f64;
        let (mean_abs, max_abs, bias) = if ok.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (
                ok.iter().map(|e| e.abs()).sum::<f64>() / n,
                ok.iter().fold(0.0f64, |m, e| m.max(e.abs())),
                ok.iter().sum::<f64>() / n,
            )
        };
        Self {
            mean_abs,
            max_abs,
            bias,
            fail_count: errors.len() - ok.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub tuple: EvalTuple,
    pub method: Method,
    /// Signed x error per step; `None` where the localizer failed.
    pub errors: Vec<Option<f64>>,
    pub summary: Summary,
}

/// CR positions of a sweep in a `size` patch.
pub fn sweep_positions(size: usize) -> Vec<Point> {
    let c = (size as f64 - 1.0) / 2.0;
    let x0 = c - 0.5;
    (0..SWEEP_STEPS)
        .map(|k| Point::new(x0 + SWEEP_STEP * k as f64, c))
        .collect()
}

/// Noise seed of step `step` of `tuple`.
pub fn step_noise_seed(seed: u64, tuple: &EvalTuple, step: usize) -> u64 {
    let mut s = seed::derive_seed(seed, Domain::EvalNoise, step as u64);
    for v in [
        tuple.radius,
        tuple.amplitude,
        tuple.sigma_n,
        tuple.edge.unwrap_or(f64::NAN),
        tuple.light,
    ] {
        s = seed::mix(s, v.to_bits());
    }
    s
}

/// Runs one sweep and evaluates every method on the same images.
pub fn sweep_methods(
    tuple: &EvalTuple,
    methods: &[Method],
    locs: &Localizers,
    seed: u64,
    size: usize,
) -> Result<Vec<SweepResult>> {
    locs.check(methods)?;
    let mut errors = vec![Vec::with_capacity(SWEEP_STEPS); methods.len()];
    for (k, c) in sweep_positions(size).into_iter().enumerate() {
        let scene = tuple.scene(c, size, step_noise_seed(seed, tuple, k));
        let sample = render_scene(&scene)?;
        for (m, &method) in methods.iter().enumerate() {
            errors[m].push(locs.locate(method, &sample).ok().map(|p| p.x - c.x));
        }
    }
    Ok(methods
        .iter()
        .zip(errors)
        .map(|(&method, errors)| SweepResult {
            tuple: *tuple,
            method,
            summary: Summary::of(&errors),
            errors,
        })
        .collect())
}

pub fn subpixel_sweep(
    tuple: &EvalTuple,
    method: Method,
    locs: &Localizers,
    seed: u64,
) -> Result<SweepResult> {
    Ok(sweep_methods(tuple, &[method], locs, seed, EVAL_PATCH_SIZE)?.remove(0))
}

/// Sweeps every tuple of `tuples[start..]` with every method, in parallel,
/// handing finished rows to `sink` in deterministic order, `chunk` tuples at
/// a time. Rows are tuple-major, then in `methods` order.
#[allow(clippy::too_many_arguments)]
pub fn grid_eval_streaming(
    tuples: &[EvalTuple],
    start: usize,
    methods: &[Method],
    locs: &Localizers,
    seed: u64,
    size: usize,
    chunk: usize,
    sink: &mut dyn FnMut(&[SweepResult]) -> Result<()>,
) -> Result<()> {
    locs.check(methods)?;
    if start > tuples.len() {
        return Err(Error::invalid(format!(
            "resume point {start} beyond {} tuples",
            tuples.len()
        )));
    }
    for block in tuples[start..].chunks(chunk.max(1)) {
        let rows: Vec<Vec<SweepResult>> = block
            .par_iter()
            .map(|t| sweep_methods(t, methods, locs, seed, size))
            .collect::<Result<_>>()?;
        sink(&rows.concat())?;
    }
    Ok(())
}

/// Runs the strided grid and returns all rows.
pub fn grid_eval(
    grid: &EvalGrid,
    methods: &[Method],
    stride: GridStride,
    seed: u64,
    locs: &Localizers,
) -> Result<Vec<SweepResult>> {
    let tuples = grid.tuples(stride)?;
    let mut out = Vec::with_capacity(tuples.len() * methods.len());
    grid_eval_streaming(
        &tuples,
        0,
        methods,
        locs,
        seed,
        EVAL_PATCH_SIZE,
        64,
        &mut |rows| {
            out.extend_from_slice(rows);
            Ok(())
        },
    )?;
    Ok(out)
}

/// Oracle sweeps over radius x amplitude on a black, noise-free background.
pub fn optimal_benchmark(grid: &EvalGrid) -> Result<Vec<SweepResult>> {
    let tuples: Vec<EvalTuple> = grid
        .radii
        .iter()
        .flat_map(|&radius| {
            grid.amplitudes.iter().map(move |&amplitude| EvalTuple {
                radius,
                amplitude,
                sigma_n: 0.0,
                edge: None,
                light: 0.0,
            })
        })
        .collect();
    let locs = Localizers::default();
    tuples
        .par_iter()
        .map(|t| Ok(sweep_methods(t, &[Method::OracleCom], &locs, 0, EVAL_PATCH_SIZE)?.remove(0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionResult {
    /// RMS of Euclidean differences between consecutive successful estimates.
    pub rms: f64,
    pub frames: usize,
    pub failures: usize,
}

/// Localizes `n_frames` renders of one scene that differ only in their
/// noise realization and returns the sample-to-sample RMS of the estimates.
pub fn precision_sweep(
    tuple: &EvalTuple,
    center: Point,
    method: Method,
    locs: &Localizers,
    n_frames: usize,
    seed: u64,
) -> Result<PrecisionResult> {
    Ok(precision_sweep_methods(tuple, center, &[method], locs, n_frames, seed)?.remove(0))
}

/// [`precision_sweep`] for several methods on the same frames.
pub fn precision_sweep_methods(
    tuple: &EvalTuple,
    center: Point,
    methods: &[Method],
    locs: &Localizers,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<PrecisionResult>> {
    if n_frames < 2 {
        return Err(Error::invalid("precision sweep needs at least 2 frames"));
    }
    locs.check(methods)?;
    let estimates: Vec<Vec<Option<Point>>> = (0..n_frames as u64)
        .into_par_iter()
        .map(|i| {
            let scene = tuple.scene(
                center,
                EVAL_PATCH_SIZE,
                seed::derive_seed(seed, Domain::PrecisionNoise, i),
            );
            let sample = render_scene(&scene)?;
            Ok(methods
                .iter()
                .map(|&m| locs.locate(m, &sample).ok())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..methods.len())
        .map(|m| {
            let ok: Vec<Point> = estimates.iter().filter_map(|e| e[m]).collect();
            let rms = if ok.len() < 2 {
                f64::NAN
            } else {
                let ss: f64 = ok
                    .windows(2)
                    .map(|w| {
                        let d = w[1] - w[0];
                        d.x * d.x + d.y * d.y
                    })
                    .sum();
                (ss / (ok.len() - 1) as f64).sqrt()
            };
            PrecisionResult {
                rms,
                frames: n_frames,
                failures: n_frames - ok.len(),
            }
        })
        .collect())
}

pub const TABLE_HEADER: [&str; 10] = [
    "r",
    "A",
    "sigma_n",
    "E",
    "I",
    "method",
    "mean_abs_err",
    "max_abs_err",
    "bias",
    "fail_count",
];

fn edge_label(e: Option<f64>) -> String {
    e.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn tuple_fields(t: &EvalTuple) -> [String; 5] {
    [
        t.radius.to_string(),
        t.amplitude.to_string(),
        t.sigma_n.to_string(),
        edge_label(t.edge),
        t.light.to_string(),
    ]
}

/// Summary table rows (no header).
pub fn write_rows(out: &mut impl Write, rows: &[SweepResult]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for r in rows {
        let s = &r.summary;
        let mut rec: Vec<String> = tuple_fields(&r.tuple).into();
        rec.push(r.method.to_string());
        rec.push(format!("{:.6}", s.mean_abs));
        rec.push(format!("{:.6}", s.max_abs));
        rec.push(format!("{:.6}", s.bias));
        rec.push(s.fail_count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_table(out: &mut impl Write, rows: &[SweepResult]) -> std::io::Result<()> {
    writeln!(out, "{}", TABLE_HEADER.join(","))?;
    write_rows(out, rows)
}

/// Raw per-step series: one row per (sweep, step).
pub fn write_series(out: &mut impl Write, rows: &[SweepResult]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "r", "A", "sigma_n", "E", "I", "method", "step", "x_true", "error",
    ])?;
    let xs = sweep_positions(EVAL_PATCH_SIZE);
    for r in rows {
        for (k, e) in r.errors.iter().enumerate() {
            let mut rec: Vec<String> = tuple_fields(&r.tuple).into();
            rec.push(r.method.to_string());
            rec.push(k.to_string());
            rec.push(format!("{:.2}", xs[k].x));
            rec.push(e.map_or_else(String::new, |v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::build_eval_grid;

    fn tuple(r: f64, a: f64, s: f64, e: Option<f64>, i: f64) -> EvalTuple {
        EvalTuple {
            radius: r,
            amplitude: a,
            sigma_n: s,
            edge: e,
            light: i,
        }
    }

    #[test]
    fn sweep_geometry() {
        let xs = sweep_positions(180);
        assert_eq!(xs.len(), 100);
        assert_eq!(xs[0], Point::new(89.0, 89.5));
        assert!((xs[99].x - 89.99).abs() < 1e-12);
    }

    #[test]
    fn oracle_is_near_exact_for_large_saturated_cr() {
        let r = subpixel_sweep(
            &tuple(10.0, 10000.0, 0.0, None, 0.0),
            Method::OracleCom,
            &Localizers::default(),
            0,
        )
        .unwrap();
        // Frozen from the oracle itself; quantization of the steep saturated
        // edge keeps it just above 0.01 px.
        assert!(
            (r.summary.max_abs - 0.013_730_105_054_321).abs() < 1e-9,
            "{:?}",
            r.summary
        );
        assert_eq!(r.summary.bias, 0.0);
        assert_eq!(r.summary.fail_count, 0);
    }

    #[test]
    fn threshold_noise_free_gray_background() {
        for radius in [4.0, 6.0, 8.0, 12.0] {
            let t = tuple(radius, 1000.0, 0.0, Some(0.0), 128.0);
            let r = subpixel_sweep(&t, Method::Threshold, &Localizers::default(), 0).unwrap();
            // Binary-disk quantization: about 0.13 px at r = 4, below 0.1 px from r = 6.
            let bound = if radius < 6.0 { 0.15 } else { 0.1 };
            assert!(r.summary.mean_abs <= bound, "r={radius}: {:?}", r.summary);
        }
    }

    #[test]
    fn sweeps_are_deterministic_and_summaries_consistent() {
        let t = tuple(6.0, 200.0, 8.0, Some(0.5), 89.0);
        let locs = Localizers::default();
        let a = subpixel_sweep(&t, Method::RadialSymmetry, &locs, 3).unwrap();
        let b = subpixel_sweep(&t, Method::RadialSymmetry, &locs, 3).unwrap();
        assert_eq!(a, b);
        let s = Summary::of(&a.errors);
        assert!((s.mean_abs - a.summary.mean_abs).abs() < 1e-12);
        assert!((s.bias - a.summary.bias).abs() < 1e-12);
        assert_eq!(a.errors.len(), SWEEP_STEPS);
    }

    #[test]
    fn methods_share_noise() {
        let t = tuple(6.0, 200.0, 8.0, None, 89.0);
        let locs = Localizers::default();
        let both = sweep_methods(
            &t,
            &[Method::Threshold, Method::IntensityCom],
            &locs,
            4,
            180,
        )
        .unwrap();
        assert_eq!(
            both[0],
            subpixel_sweep(&t, Method::Threshold, &locs, 4).unwrap()
        );
        assert_eq!(
            both[1],
            subpixel_sweep(&t, Method::IntensityCom, &locs, 4).unwrap()
        );
    }

    #[test]
    fn intensity_centroid_never_beats_oracle_on_clean_black() {
        let locs = Localizers::default();
        for (r, a) in [(2.0, 10.0), (4.0, 1000.0), (8.0, 50.0)] {
            let t = tuple(r, a, 0.0, None, 0.0);
            let rows = sweep_methods(
                &t,
                &[Method::IntensityCom, Method::OracleCom],
                &locs,
                0,
                180,
            )
            .unwrap();
            assert!(rows[0].summary.max_abs >= rows[1].summary.max_abs - 1e-9);
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        // No blob can meet the minimum area.
        let mut locs = Localizers::default();
        locs.threshold.min_area = 1e6;
        let t = tuple(4.0, 100.0, 0.0, None, 0.0);
        let r = subpixel_sweep(&t, Method::Threshold, &locs, 0).unwrap();
        assert_eq!(r.summary.fail_count, SWEEP_STEPS);
        assert!(r.summary.mean_abs.is_nan());
        assert!(subpixel_sweep(&t, Method::Cnn, &locs, 0).is_err());
    }

    #[test]
    fn grid_row_count_and_order() {
        let grid = build_eval_grid();
        assert_eq!(grid.tuples([1; 5]).unwrap().len(), 36000);
        let mut small = grid.clone();
        small.radii = vec![6.0];
        small.amplitudes = vec![1000.0];
        small.noise_levels = vec![0.0, 4.0];
        small.edges = vec![None, Some(0.0)];
        small.light_levels = vec![64.0];
        let methods = [Method::Threshold, Method::IntensityCom];
        let rows = grid_eval(&small, &methods, [1; 5], 1, &Localizers::default()).unwrap();
        assert_eq!(rows.len(), 4 * 2);
        assert_eq!(rows[0].method, Method::Threshold);
        assert_eq!(rows[1].method, Method::IntensityCom);
        assert_eq!(rows[2].tuple.edge, Some(0.0));

        let tuples = small.tuples([1; 5]).unwrap();
        let mut resumed = Vec::new();
        grid_eval_streaming(
            &tuples,
            2,
            &methods,
            &Localizers::default(),
            1,
            180,
            1,
            &mut |r| {
                resumed.extend_from_slice(r);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(resumed, rows[4..]);
    }

    #[test]
    fn precision_zero_noise_is_zero() {
        let t = tuple(8.0, 1000.0, 0.0, Some(0.0), 102.0);
        let c = Point::new(89.7, 89.2);
        let res = precision_sweep_methods(
            &t,
            c,
            &[
                Method::Threshold,
                Method::RadialSymmetry,
                Method::IntensityCom,
            ],
            &Localizers::default(),
            5,
            0,
        )
        .unwrap();
        for r in res {
            assert_eq!(r.rms, 0.0);
        }
        assert!(precision_sweep(&t, c, Method::Threshold, &Localizers::default(), 1, 0).is_err());
    }

    #[test]
    fn table_format() {
        let t = tuple(2.0, 10.0, 0.0, None, 38.0);
        let rows = vec![SweepResult {
            tuple: t,
            method: Method::Threshold,
            errors: vec![Some(0.5), None, Some(-0.25)],
            summary: Summary::of(&[Some(0.5), None, Some(-0.25)]),
        }];
        let mut out = Vec::new();
        write_table(&mut out, &rows).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "r,A,sigma_n,E,I,method,mean_abs_err,max_abs_err,bias,fail_count\n\
             2,10,0,none,38,threshold,0.375000,0.500000,0.125000,1\n"
        );
    }
}

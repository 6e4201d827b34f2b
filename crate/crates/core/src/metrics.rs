//! Eye-tracking data quality and P-CR calibration.
//!
//! Precision measures are computed in windows of `round(window_s * rate)`
//! samples sliding by one sample and aggregated by the median across
//! windows. The calibration maps a P-CR vector `(x, y)` to gaze with one
//! second-order polynomial per axis:
//!
//! ```text
//! p = a + b x + c y + d x^2 + e y^2 + f x y
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{median, median_point, Point};
use crate::{Error, Result};

/// Default precision window in seconds.
pub const DEFAULT_WINDOW_S: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeRecord {
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    pub samples: Vec<Point>,
    /// Hz.
    pub sampling_rate: f64,
}

impl GazeRecord {
    pub fn new(timestamps: Vec<f64>, samples: Vec<Point>, sampling_rate: f64) -> Result<Self> {
        let rec = Self {
            timestamps,
            samples,
            sampling_rate,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Evenly sampled record starting at `t0`.
    pub fn from_rate(samples: Vec<Point>, sampling_rate: f64, t0: f64) -> Result<Self> {
        let timestamps = (0..samples.len())
            .map(|i| t0 + i as f64 / sampling_rate)
            .collect();
        Self::new(timestamps, samples, sampling_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if self.timestamps.len() != self.samples.len() {
            return Err(Error::invalid(format!(
                "{} timestamps for {} samples",
                self.timestamps.len(),
                self.samples.len()
            )));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if self.timestamps.len() >= 2 {
            let span = self.timestamps[self.timestamps.len() - 1] - self.timestamps[0];
            let rate = (self.timestamps.len() - 1) as f64 / span;
            if (rate / self.sampling_rate - 1.0).abs() > 0.01 {
                return Err(Error::invalid(format!(
                    "timestamps imply {rate:.3} Hz, record states {} Hz",
                    self.sampling_rate
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with `onset <= t < offset`.
    pub fn interval(&self, onset: f64, offset: f64) -> Vec<Point> {
        self.timestamps
            .iter()
            .zip(&self.samples)
            .filter(|(t, _)| **t >= onset && **t < offset)
            .map(|(_, p)| *p)
            .collect()
    }
}

/// Window length in samples.
pub fn window_len(rate: f64, window_s: f64) -> Result<usize> {
    let n = (window_s * rate).round();
    if !(n >= 2.0) {
        return Err(Error::invalid(format!(
            "a {window_s} s window at {rate} Hz holds fewer than 2 samples"
        )));
    }
    Ok(n as usize)
}

fn windowed(rec: &GazeRecord, window_s: f64, f: impl Fn(&[Point]) -> f64) -> Result<f64> {
    let n = window_len(rec.sampling_rate, window_s)?;
    if rec.len() < n {
        return Err(Error::Empty(format!(
            "{} samples, one window needs {n}",
            rec.len()
        )));
    }
    let values: Vec<f64> = rec.samples.windows(n).map(f).collect();
    Ok(median(values).expect("at least one window"))
}

/// RMS of sample-to-sample Euclidean distances within one window.
pub fn window_rms_s2s(w: &[Point]) -> f64 {
    let ss: f64 = w
        .windows(2)
        .map(|p| {
            let d = p[1] - p[0];
            d.x * d.x + d.y * d.y
        })
        .sum();
    (ss / (w.len() - 1) as f64).sqrt()
}

/// `sqrt(var x + var y)` with population variances.
pub fn window_std(w: &[Point]) -> f64 {
    let n = w.len() as f64;
    let mx = w.iter().map(|p| p.x).sum::<f64>() / n;
    let my = w.iter().map(|p| p.y).sum::<f64>() / n;
    let v: f64 = w
        .iter()
        .map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2))
        .sum::<f64>()
        / n;
    v.sqrt()
}

/// Median over sliding windows of the windowed RMS-S2S.
pub fn rms_s2s(rec: &GazeRecord, window_s: f64) -> Result<f64> {
    windowed(rec, window_s, window_rms_s2s)
}

/// Median over sliding windows of the windowed STD.
pub fn std_precision(rec: &GazeRecord, window_s: f64) -> Result<f64> {
    windowed(rec, window_s, window_std)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationTarget {
    /// Degrees.
    pub position: Point,
    pub onset: f64,
    pub offset: f64,
}

impl FixationTarget {
    pub fn new(position: Point, onset: f64, offset: f64) -> Result<Self> {
        if !(offset > onset) {
            return Err(Error::invalid(format!(
                "fixation offset {offset} not after onset {onset}"
            )));
        }
        Ok(Self {
            position,
            onset,
            offset,
        })
    }
}

/// Component-wise median of each target's interval; `None` for empty ones.
pub fn fixation_medians(rec: &GazeRecord, targets: &[FixationTarget]) -> Vec<Option<Point>> {
    targets
        .iter()
        .map(|t| median_point(&rec.interval(t.onset, t.offset)))
        .collect()
}

/// Calibration coefficients `(a, b, c, d, e, f)` per output axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub x: [f64; 6],
    pub y: [f64; 6],
    /// RMS Euclidean residual at the fit points.
    pub residual_rms: f64,
}

fn terms(p: Point) -> [f64; 6] {
    [1.0, p.x, p.y, p.x * p.x, p.y * p.y, p.x * p.y]
}

fn poly(c: &[f64; 6], p: Point) -> f64 {
    terms(p).iter().zip(c).map(|(t, c)| t * c).sum()
}

impl Calibration {
    pub fn zero() -> Self {
        Self {
            x: [0.0; 6],
            y: [0.0; 6],
            residual_rms: 0.0,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(poly(&self.x, p), poly(&self.y, p))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Least-squares fit of the calibration polynomial (SVD solve).
pub fn fit_calibration(pcr: &[Point], targets: &[Point]) -> Result<Calibration> {
    if pcr.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} P-CR points for {} targets",
            pcr.len(),
            targets.len()
        )));
    }
    if pcr.iter().chain(targets).any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite calibration input"));
    }
    let n = pcr.len();
    let a = DMatrix::from_fn(n, 6, |i, j| terms(pcr[i])[j]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < 6 {
        let mut distinct = pcr.to_vec();
        distinct.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
        distinct.dedup();
        return Err(Error::RankDeficient {
            rank,
            columns: 6,
            detail: format!(
                "{} of the 6 polynomial terms are undetermined by {n} points ({} distinct)",
                6 - rank,
                distinct.len()
            ),
        });
    }
    let solve = |axis: fn(&Point) -> f64| -> Result<[f64; 6]> {
        let b = DVector::from_iterator(n, targets.iter().map(axis));
        let c = svd
            .solve(&b, tol)
            .map_err(|e| Error::invalid(format!("calibration solve: {e}")))?;
        let mut out = [0.0; 6];
        out.copy_from_slice(c.as_slice());
        Ok(out)
    };
    let mut cal = Calibration {
        x: solve(|p| p.x)?,
        y: solve(|p| p.y)?,
        residual_rms: 0.0,
    };
    let ss: f64 = pcr
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = cal.apply(*p) - *t;
            d.x * d.x + d.y * d.y
        })
        .sum();
    cal.residual_rms = (ss / n as f64).sqrt();
    if !cal.is_finite() {
        return Err(Error::invalid(
            "calibration produced non-finite coefficients",
        ));
    }
    Ok(cal)
}

/// Fits from a raw P-CR record: each target contributes the median P-CR
/// vector of its interval. Targets with empty intervals are skipped.
pub fn fit_calibration_from_record(
    pcr: &GazeRecord,
    targets: &[FixationTarget],
) -> Result<Calibration> {
    let (xs, ts): (Vec<Point>, Vec<Point>) = fixation_medians(pcr, targets)
        .into_iter()
        .zip(targets)
        .filter_map(|(m, t)| m.map(|m| (m, t.position)))
        .unzip();
    fit_calibration(&xs, &ts)
}

pub fn apply_calibration(cal: &Calibration, pcr: &[Point]) -> Vec<Point> {
    pcr.iter().map(|p| cal.apply(*p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Mean over distinct target positions of the (averaged) offsets.
    pub accuracy: f64,
    /// Offset per input target; `None` when its interval held no samples.
    pub per_target: Vec<Option<f64>>,
    pub excluded: usize,
}

/// Offset of the per-interval median gaze from each target, averaged over
/// repeated presentations of a position, then over positions.
pub fn accuracy(gaze: &GazeRecord, targets: &[FixationTarget]) -> Result<Accuracy> {
    let per_target: Vec<Option<f64>> = fixation_medians(gaze, targets)
        .into_iter()
        .zip(targets)
        .map(|(m, t)| m.map(|m| m.distance(t.position)))
        .collect();
    let mut groups: Vec<(Point, f64, usize)> = Vec::new();
    for (off, t) in per_target.iter().zip(targets) {
        let Some(off) = off else { continue };
        match groups.iter_mut().find(|g| g.0 == t.position) {
            Some(g) => {
                g.1 += off;
                g.2 += 1;
            }
            None => groups.push((t.position, *off, 1)),
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty("no target interval contains samples".into()));
    }
    let accuracy = groups.iter().map(|g| g.1 / g.2 as f64).sum::<f64>() / groups.len() as f64;
    Ok(Accuracy {
        accuracy,
        excluded: per_target.iter().filter(|o| o.is_none()).count(),
        per_target,
    })
}

/// One row of the per-trial metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub trial: String,
    pub method: String,
    pub rms_s2s: f64,
    pub std: f64,
    pub accuracy: Option<f64>,
}

pub fn write_metrics_table(out: &mut impl Write, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "method", "rms_s2s", "std", "accuracy"])?;
    for r in rows {
        w.write_record([
            r.trial.clone(),
            r.method.clone(),
            format!("{:.6}", r.rms_s2s),
            format!("{:.6}", r.std),
            r.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn rec(samples: Vec<Point>, rate: f64) -> GazeRecord {
        GazeRecord::from_rate(samples, rate, 0.0).unwrap()
    }

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn record_validation() {
        assert!(GazeRecord::new(vec![0.0, 0.0], vec![p(0.0, 0.0); 2], 1.0).is_err());
        assert!(GazeRecord::new(vec![0.0, 1.0], vec![p(0.0, 0.0); 2], 1.5).is_err());
        assert!(GazeRecord::new(vec![0.0, 1.0], vec![p(0.0, 0.0); 3], 1.0).is_err());
        assert!(GazeRecord::new(vec![0.0, 1.005], vec![p(0.0, 0.0); 2], 1.0).is_ok());
    }

    #[test]
    fn constant_signal_is_zero() {
        let r = rec(vec![p(3.0, -2.0); 500], 500.0);
        assert_eq!(rms_s2s(&r, 0.2).unwrap(), 0.0);
        assert_eq!(std_precision(&r, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn square_wave_rms_is_one() {
        let s = (0..300).map(|i| p((i % 2) as f64, 0.0)).collect();
        assert_eq!(rms_s2s(&rec(s, 500.0), 0.2).unwrap(), 1.0);
    }

    #[test]
    fn std_of_two_points_is_one() {
        // 10 Hz, 0.2 s -> 2-sample windows.
        let r = rec(vec![p(0.0, 0.0), p(2.0, 0.0)], 10.0);
        assert_eq!(std_precision(&r, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn single_step_does_not_move_median() {
        // 100 windows of 100 samples over 199... use a long trace so that
        // fewer than half of the windows contain the step.
        let mut s: Vec<Point> = (0..1000).map(|i| p(0.0, (i % 2) as f64)).collect();
        for q in s.iter_mut().skip(500) {
            q.x += 10.0;
        }
        let base: Vec<Point> = (0..1000).map(|i| p(0.0, (i % 2) as f64)).collect();
        let a = rms_s2s(&rec(s, 500.0), 0.2).unwrap();
        let b = rms_s2s(&rec(base, 500.0), 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_short_record_is_an_error() {
        let r = rec(vec![p(0.0, 0.0); 50], 500.0);
        assert!(rms_s2s(&r, 0.2).is_err());
        assert!(std_precision(&r, 0.2).is_err());
    }

    fn white_noise(n: usize, sigma: f64, seed: u64) -> Vec<Point> {
        let mut rng = crate::seed::rng(seed);
        (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                p(sigma * x, sigma * y)
            })
            .collect()
    }

    #[test]
    fn white_noise_relations() {
        let r = rec(white_noise(100_000, 0.7, 1), 1000.0);
        let rms = rms_s2s(&r, 0.2).unwrap();
        let std = std_precision(&r, 0.2).unwrap();
        assert!((std / (0.7 * 2f64.sqrt()) - 1.0).abs() < 0.05, "std {std}");
        assert!(
            (rms / std / 2f64.sqrt() - 1.0).abs() < 0.10,
            "ratio {}",
            rms / std
        );
    }

    proptest! {
        #[test]
        fn translation_and_scale(
            pts in prop::collection::vec((-64i32..64, -64i32..64), 40..120),
            ox in -100i32..100,
            oy in -100i32..100,
            k in 0i32..4,
        ) {
            let s: Vec<Point> = pts.iter().map(|&(x, y)| p(x as f64, y as f64)).collect();
            let shifted: Vec<Point> = s.iter().map(|q| *q + p(ox as f64, oy as f64)).collect();
            let c = 2f64.powi(k - 1);
            let scaled: Vec<Point> = s.iter().map(|q| *q * c).collect();
            let (a, b, d) = (rec(s, 100.0), rec(shifted, 100.0), rec(scaled, 100.0));
            prop_assert_eq!(rms_s2s(&a, 0.2).unwrap(), rms_s2s(&b, 0.2).unwrap());
            prop_assert_eq!(rms_s2s(&a, 0.2).unwrap() * c, rms_s2s(&d, 0.2).unwrap());
            prop_assert_eq!(std_precision(&a, 0.2).unwrap() * c, std_precision(&d, 0.2).unwrap());
            let (sa, sb) = (std_precision(&a, 0.2).unwrap(), std_precision(&b, 0.2).unwrap());
            prop_assert!((sa - sb).abs() <= 1e-12 * (1.0 + sa));
        }

        #[test]
        fn general_scale_is_linear(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 30..60), c in 0.01f64..100.0) {
            let s: Vec<Point> = pts.iter().map(|&(x, y)| p(x, y)).collect();
            let scaled: Vec<Point> = s.iter().map(|q| *q * c).collect();
            let (a, b) = (rec(s, 100.0), rec(scaled, 100.0));
            let (ra, rb) = (rms_s2s(&a, 0.2).unwrap(), rms_s2s(&b, 0.2).unwrap());
            prop_assert!((ra * c - rb).abs() <= 1e-12 * rb.max(1e-300));
        }
    }

    fn grid3() -> Vec<Point> {
        let mut g = Vec::new();
        for y in [-1.0, 0.0, 1.0] {
            for x in [-1.0, 0.0, 1.0] {
                g.push(p(x * 7.0 + 0.5, y * 5.0 - 0.25));
            }
        }
        g
    }

    #[test]
    fn calibration_recovers_polynomial() {
        let truth = [1.0, 2.0, 3.0, 0.1, -0.2, 0.05];
        let pts = grid3();
        let targets: Vec<Point> = pts
            .iter()
            .map(|&q| p(poly(&truth, q), poly(&truth, q) * 0.5))
            .collect();
        let cal = fit_calibration(&pts, &targets).unwrap();
        for ((cx, cy), t) in cal.x.iter().zip(&cal.y).zip(&truth) {
            assert!((cx - t).abs() < 1e-9, "{:?}", cal.x);
            assert!((cy - 0.5 * t).abs() < 1e-9);
        }
        assert!(cal.residual_rms < 1e-9);
        for (q, t) in pts.iter().zip(&targets) {
            assert!(cal.apply(*q).distance(*t) <= cal.residual_rms + 1e-12);
        }
    }

    #[test]
    fn identity_calibration() {
        let pts = grid3();
        let cal = fit_calibration(&pts, &pts).unwrap();
        let expect = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert!(cal.x.iter().zip(expect).all(|(c, e)| (c - e).abs() < 1e-12));
    }

    #[test]
    fn identical_inputs_are_rank_deficient() {
        let pts = vec![p(2.0, 3.0); 9];
        match fit_calibration(&pts, &grid3()) {
            Err(Error::RankDeficient {
                rank: 1,
                columns: 6,
                detail,
            }) => {
                assert!(detail.contains("5 of the 6"), "{detail}")
            }
            other => panic!("{other:?}"),
        }
        let collinear: Vec<Point> = (0..9).map(|i| p(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            fit_calibration(&collinear, &grid3()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn least_squares_optimality() {
        let pts = grid3();
        let targets: Vec<Point> = pts
            .iter()
            .enumerate()
            .map(|(i, q)| {
                p(
                    q.x * 1.5 + (i as f64 * 0.37).sin(),
                    q.y - 0.3 * (i as f64).cos(),
                )
            })
            .collect();
        let cal = fit_calibration(&pts, &targets).unwrap();
        let sse = |c: &Calibration| -> f64 {
            pts.iter()
                .zip(&targets)
                .map(|(q, t)| {
                    let d = c.apply(*q) - *t;
                    d.x * d.x + d.y * d.y
                })
                .sum()
        };
        let best = sse(&cal);
        for i in 0..6 {
            for h in [-1e-3, 1e-3] {
                let mut c = cal;
                c.x[i] += h;
                assert!(sse(&c) >= best);
                let mut c = cal;
                c.y[i] += h;
                assert!(sse(&c) >= best);
            }
        }
    }

    #[test]
    fn apply_examples() {
        let pts = grid3();
        assert!(apply_calibration(&Calibration::zero(), &pts)
            .iter()
            .all(|q| *q == p(0.0, 0.0)));
        // Linear map g = a + b x + c y; shifting inputs by (s, t) equals
        // replacing a with a + b s + c t.
        let lin = Calibration {
            x: [0.5, 2.0, -1.0, 0.0, 0.0, 0.0],
            y: [1.0, 0.25, 3.0, 0.0, 0.0, 0.0],
            residual_rms: 0.0,
        };
        let (s, t) = (1.5, -2.0);
        let mut moved = lin;
        moved.x[0] += lin.x[1] * s + lin.x[2] * t;
        moved.y[0] += lin.y[1] * s + lin.y[2] * t;
        for q in pts {
            let a = lin.apply(q + p(s, t));
            let b = moved.apply(q);
            assert!(a.distance(b) < 1e-12);
        }
    }

    fn targets_grid() -> Vec<FixationTarget> {
        grid3()
            .into_iter()
            .enumerate()
            .map(|(i, q)| FixationTarget::new(q, i as f64, i as f64 + 1.0).unwrap())
            .collect()
    }

    fn gaze_for(targets: &[FixationTarget], offset: Point) -> GazeRecord {
        let rate = 100.0;
        let n = (targets.len() as f64 * rate) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                targets[(t as usize).min(targets.len() - 1)].position + offset
            })
            .collect();
        rec(samples, rate)
    }

    #[test]
    fn accuracy_examples() {
        let t = targets_grid();
        assert_eq!(
            accuracy(&gaze_for(&t, p(0.0, 0.0)), &t).unwrap().accuracy,
            0.0
        );
        let a = accuracy(&gaze_for(&t, p(0.5, 0.0)), &t).unwrap();
        assert!((a.accuracy - 0.5).abs() < 1e-12);

        let mut g = gaze_for(&t, p(0.0, 0.0));
        // Outlier burst in 40 of the 100 samples of target 3.
        for s in g.samples.iter_mut().skip(300).take(40) {
            *s = *s + p(50.0, -80.0);
        }
        assert_eq!(accuracy(&g, &t).unwrap().accuracy, 0.0);
    }

    #[test]
    fn accuracy_groups_repeats_and_skips_empty() {
        let q = p(1.0, 1.0);
        let targets = vec![
            FixationTarget::new(q, 0.0, 1.0).unwrap(),
            FixationTarget::new(q, 1.0, 2.0).unwrap(),
            FixationTarget::new(p(5.0, 5.0), 2.0, 3.0).unwrap(),
            FixationTarget::new(p(9.0, 9.0), 50.0, 51.0).unwrap(),
        ];
        let mut samples = vec![q + p(1.0, 0.0); 100];
        samples.extend(vec![q + p(3.0, 0.0); 100]);
        samples.extend(vec![p(5.0, 5.0); 100]);
        let g = rec(samples, 100.0);
        let a = accuracy(&g, &targets).unwrap();
        // Position (1,1): mean of 1 and 3 = 2; position (5,5): 0.
        assert!((a.accuracy - 1.0).abs() < 1e-12);
        assert_eq!(a.excluded, 1);
        assert!(FixationTarget::new(q, 2.0, 2.0).is_err());
    }

    #[test]
    fn calibration_from_record_uses_medians() {
        let t = targets_grid();
        let pcr = gaze_for(&t, p(0.0, 0.0));
        let cal = fit_calibration_from_record(&pcr, &t).unwrap();
        for q in grid3() {
            assert!(cal.apply(q).distance(q) < 1e-9);
        }
    }

    #[test]
    fn table_format() {
        let mut out = Vec::new();
        write_metrics_table(
            &mut out,
            &[MetricsRow {
                trial: "t1".into(),
                method: "cnn".into(),
                rms_s2s: 0.125,
                std: 0.5,
                accuracy: None,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "trial,method,rms_s2s,std,accuracy\nt1,cnn,0.125000,0.500000,\n"
        );
    }
}

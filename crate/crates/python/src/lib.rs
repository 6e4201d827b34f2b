//! Python bindings: synthetic rendering, the localizers, CNN models,
//! training, the frame pipeline and the data-quality metrics.

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use crloc::localize::{
    IntensityCentroid, Localizer, Method, RadialSymmetry, ThresholdParams, Thresholding,
};
use crloc::neural::{self, CnnLocalizer, NetworkSpec, NetworkState};
use crloc::pipeline::{FrameResult, PipelineConfig, Refiner};
use crloc::seed::{self, Domain};
use crloc::synthgen::{EvalTuple, Stage};
use crloc::train::TrainConfig;
use crloc::{metrics, Error, ImagePatch, Point};

fn py_err(e: Error) -> PyErr {
    match &e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn points(v: Vec<(f64, f64)>) -> Vec<Point> {
    v.into_iter().map(|(x, y)| Point::new(x, y)).collect()
}

/// 8-bit grayscale image, row-major.
#[pyclass(name = "Image", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyImage(ImagePatch);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, levels: Vec<u8>) -> PyResult<Self> {
        ImagePatch::from_levels(width, height, levels)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn levels<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.levels())
    }

    fn level(&self, x: usize, y: usize) -> PyResult<u8> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!(
                "pixel ({x}, {y}) is outside the image"
            )));
        }
        Ok(self.0.level(x, y))
    }

    fn crop(&self, x0: i64, y0: i64, width: usize, height: usize) -> Self {
        Self(self.0.crop(x0, y0, width, height))
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        crloc::io::write_png(path, &self.0).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Render one CR scene: a saturated Gaussian of radius `radius` and
/// amplitude `amplitude` centered at `center`, on a black background or a
/// split background whose dark side is `light`, with Gaussian pixel noise.
#[pyfunction]
#[pyo3(signature = (radius, amplitude, center, size=180, sigma_n=0.0, edge=None, light=89.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn render_scene(
    radius: f64,
    amplitude: f64,
    center: (f64, f64),
    size: usize,
    sigma_n: f64,
    edge: Option<f64>,
    light: f64,
    seed: u64,
) -> PyResult<(PyImage, (f64, f64))> {
    let tuple = EvalTuple {
        radius,
        amplitude,
        sigma_n,
        edge,
        light,
    };
    let spec = tuple.scene(Point::new(center.0, center.1), size, seed);
    let s = crloc::synthgen::render_scene(&spec).map_err(py_err)?;
    Ok((PyImage(s.image), (s.truth.x, s.truth.y)))
}

/// Draw `n` training scenes from a stage distribution (1 or 2).
#[pyfunction]
#[pyo3(signature = (stage, n, size=64, seed=0))]
fn sample_scenes(
    stage: u8,
    n: usize,
    size: usize,
    seed: u64,
) -> PyResult<Vec<(PyImage, (f64, f64))>> {
    let stage = parse_stage(stage)?;
    let dist = crloc::synthgen::StageDistributions::with_size(size);
    (0..n as u64)
        .map(|i| {
            let spec = crloc::synthgen::sample_stage(
                &dist,
                stage,
                seed::derive_seed(seed, Domain::Dataset, i),
            )
            .map_err(py_err)?;
            let s = crloc::synthgen::render_scene(&spec).map_err(py_err)?;
            Ok((PyImage(s.image), (s.truth.x, s.truth.y)))
        })
        .collect()
}

fn parse_stage(stage: u8) -> PyResult<Stage> {
    match stage {
        1 => Ok(Stage::One),
        2 => Ok(Stage::Two),
        _ => Err(PyValueError::new_err("stage must be 1 or 2")),
    }
}

/// CNN localizer with its optimizer state.
#[pyclass(name = "Model")]
struct PyModel(NetworkState);

#[pymethods]
impl PyModel {
    /// Fresh network; `preset` is "desk" (64 px input) or "full" (180 px).
    #[new]
    #[pyo3(signature = (preset="desk", seed=0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        let spec = match preset {
            "desk" => NetworkSpec::desk(),
            "full" => NetworkSpec::full(),
            _ => return Err(PyValueError::new_err(format!("unknown preset '{preset}'"))),
        };
        NetworkState::new(spec, seed::derive_seed(seed, Domain::NetworkInit, 0))
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        neural::load_model(path).map(Self).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        neural::save_model(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        let s = self.0.spec();
        (s.input_width, s.input_height)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.network.parameter_count()
    }

    /// CR center of an image; larger patches are center-cropped.
    fn locate(&self, image: &PyImage) -> PyResult<(f64, f64)> {
        let r = CnnLocalizer::new(self.0.network.clone())
            .locate(&image.0)
            .map_err(py_err)?;
        Ok((r.center.x, r.center.y))
    }

    /// Train in place on streamed scenes; returns validation error per epoch
    /// (epoch 0 is the untrained network). Stage 2 freezes the first two
    /// blocks.
    #[pyo3(signature = (stage, epochs=None, samples_per_epoch=None, validation_size=None, lr=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        stage: u8,
        epochs: Option<usize>,
        samples_per_epoch: Option<usize>,
        validation_size: Option<usize>,
        lr: Option<f64>,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let mut cfg = match parse_stage(stage)? {
            Stage::One => TrainConfig::desk_stage1(),
            Stage::Two => TrainConfig::desk_stage2(),
        };
        let size = self.0.spec().input_width;
        cfg.distributions = crloc::synthgen::StageDistributions::with_size(size);
        cfg.seed = seed;
        if let Some(e) = epochs {
            cfg.epochs_max = e;
        }
        if let Some(n) = samples_per_epoch {
            cfg.samples_per_epoch = n;
        }
        if let Some(n) = validation_size {
            cfg.validation_size = n;
        }
        if let Some(lr) = lr {
            cfg.adam.learning_rate = lr;
        }
        let state = self.0.clone();
        let (state, report) = py
            .detach(move || crloc::train::train(state, &cfg, &mut |_, _, _| {}))
            .map_err(py_err)?;
        self.0 = state;
        Ok(report.series())
    }
}

/// CR center by "threshold", "radial_symmetry", "intensity_com" or "cnn"
/// (which needs `model`).
#[pyfunction]
#[pyo3(signature = (image, method="threshold", model=None, threshold=None))]
fn localize(
    image: &PyImage,
    method: &str,
    model: Option<&PyModel>,
    threshold: Option<f64>,
) -> PyResult<(f64, f64)> {
    let method: Method = method.parse().map_err(py_err)?;
    let mut params = ThresholdParams::default();
    if let Some(t) = threshold {
        params.threshold = t;
    }
    let r = match method {
        Method::Threshold => Thresholding(params).locate(&image.0),
        Method::RadialSymmetry => RadialSymmetry.locate(&image.0),
        Method::IntensityCom => IntensityCentroid.locate(&image.0),
        Method::Cnn => {
            let m = model.ok_or_else(|| PyValueError::new_err("method 'cnn' needs a model"))?;
            CnnLocalizer::new(m.0.network.clone()).locate(&image.0)
        }
        Method::OracleCom => {
            return Err(PyValueError::new_err(
                "the oracle needs the scene, not an image",
            ))
        }
    }
    .map_err(py_err)?;
    Ok((r.center.x, r.center.y))
}

/// Coarse-to-fine pupil and CR detection on full eye frames.
#[pyclass(name = "Pipeline", frozen)]
struct PyPipeline(crloc::pipeline::Pipeline);

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (refiner="none", model=None, downsample=1))]
    fn new(refiner: &str, model: Option<&PyModel>, downsample: u8) -> PyResult<Self> {
        let cfg = PipelineConfig {
            refiner: refiner.parse().map_err(py_err)?,
            downsample,
            ..PipelineConfig::default()
        };
        let cnn = match cfg.refiner {
            Refiner::Cnn => Some(CnnLocalizer::new(
                model
                    .ok_or_else(|| PyValueError::new_err("refiner 'cnn' needs a model"))?
                    .0
                    .network
                    .clone(),
            )),
            _ => None,
        };
        crloc::pipeline::Pipeline::new(cfg, cnn)
            .map(Self)
            .map_err(py_err)
    }

    /// Dict with `pupil`, `cr` (coarse), `cr_refined` (each `(x, y)` or
    /// None) and `flags`.
    fn process(&self, py: Python<'_>, image: &PyImage) -> PyResult<Py<PyAny>> {
        frame_dict(py, &self.0.process_frame(0, &image.0))
    }
}

fn frame_dict(py: Python<'_>, r: &FrameResult) -> PyResult<Py<PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    let xy = |p: Option<Point>| p.map(|p| (p.x, p.y));
    d.set_item("pupil", xy(r.pupil))?;
    d.set_item("cr", xy(r.cr_threshold))?;
    d.set_item("cr_refined", xy(r.cr_refined))?;
    d.set_item("flags", r.flags.code())?;
    Ok(d.into_any().unbind())
}

/// Median over windows of RMS of successive sample differences.
#[pyfunction]
#[pyo3(signature = (samples, rate_hz, window_s=0.2))]
fn rms_s2s(samples: Vec<(f64, f64)>, rate_hz: f64, window_s: f64) -> PyResult<f64> {
    let rec = metrics::GazeRecord::from_rate(points(samples), rate_hz, 0.0).map_err(py_err)?;
    metrics::rms_s2s(&rec, window_s).map_err(py_err)
}

/// Median over windows of the 2-D sample standard deviation.
#[pyfunction]
#[pyo3(signature = (samples, rate_hz, window_s=0.2))]
fn std_precision(samples: Vec<(f64, f64)>, rate_hz: f64, window_s: f64) -> PyResult<f64> {
    let rec = metrics::GazeRecord::from_rate(points(samples), rate_hz, 0.0).map_err(py_err)?;
    metrics::std_precision(&rec, window_s).map_err(py_err)
}

/// Second-order polynomial map from P-CR vectors to gaze.
#[pyclass(name = "Calibration", frozen)]
struct PyCalibration(metrics::Calibration);

#[pymethods]
impl PyCalibration {
    #[staticmethod]
    fn fit(pcr: Vec<(f64, f64)>, targets: Vec<(f64, f64)>) -> PyResult<Self> {
        metrics::fit_calibration(&points(pcr), &points(targets))
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn x(&self) -> [f64; 6] {
        self.0.x
    }

    #[getter]
    fn y(&self) -> [f64; 6] {
        self.0.y
    }

    #[getter]
    fn residual_rms(&self) -> f64 {
        self.0.residual_rms
    }

    fn apply(&self, pcr: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        metrics::apply_calibration(&self.0, &points(pcr))
            .into_iter()
            .map(|p| (p.x, p.y))
            .collect()
    }
}

#[pymodule]
pub fn pycrloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyCalibration>()?;
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(sample_scenes, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(rms_s2s, m)?)?;
    m.add_function(wrap_pyfunction!(std_precision, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Run configuration.
//!
//! Resolution order, lowest to highest precedence: built-in defaults for the
//! preset, the TOML config file, command-line flags. The file only needs the
//! keys it changes; tables are merged key by key into the defaults and the
//! result is deserialized strictly, so an unknown or mistyped key is reported
//! with its full path.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use crloc::localize::{Method, ThresholdParams};
use crloc::neural::NetworkSpec;
use crloc::pipeline::PipelineConfig;
use crloc::synthgen::{EvalGrid, EvalTuple, Stage, StageDistributions};
use crloc::train::TrainConfig;
use crloc::Point;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 64x64 patches, 4 conv layers; trains on a desktop CPU.
    Desk,
    /// 180x180 patches, 7 conv layers.
    Full,
}

impl Preset {
    pub fn network(self) -> NetworkSpec {
        match self {
            Preset::Desk => NetworkSpec::desk(),
            Preset::Full => NetworkSpec::full(),
        }
    }
}

/// Gray-section offset as written in config files: a number of CR radii, or
/// `"none"` for an all-black background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Edge {
    Offset(f64),
    Label(NoEdge),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoEdge {
    None,
}

impl From<Option<f64>> for Edge {
    fn from(e: Option<f64>) -> Self {
        e.map_or(Edge::Label(NoEdge::None), Edge::Offset)
    }
}

impl From<Edge> for Option<f64> {
    fn from(e: Edge) -> Self {
        match e {
            Edge::Offset(v) => Some(v),
            Edge::Label(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub radii: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub noise_levels: Vec<f64>,
    pub edges: Vec<Edge>,
    pub light_levels: Vec<f64>,
}

impl From<EvalGrid> for GridConfig {
    fn from(g: EvalGrid) -> Self {
        Self {
            radii: g.radii,
            amplitudes: g.amplitudes,
            noise_levels: g.noise_levels,
            edges: g.edges.into_iter().map(Edge::from).collect(),
            light_levels: g.light_levels,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> EvalGrid {
        EvalGrid {
            radii: self.radii.clone(),
            amplitudes: self.amplitudes.clone(),
            noise_levels: self.noise_levels.clone(),
            edges: self.edges.iter().map(|&e| e.into()).collect(),
            light_levels: self.light_levels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub stage: u8,
    pub n: usize,
    pub distributions: StageDistributions,
}

/// A fixation sequence of schematic eye frames. Gaze at `target` (degrees)
/// moves the pupil by `pupil_gain * target` and the CR by `cr_gain * target`
/// pixels, so the P-CR vector is linear in gaze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeConfig {
    pub width: usize,
    pub height: usize,
    pub frame_rate_hz: f64,
    pub sclera: f64,
    pub iris_radius: f64,
    pub iris_intensity: f64,
    pub pupil_radius: f64,
    pub pupil_intensity: f64,
    pub cr_radius: f64,
    pub cr_amplitude: f64,
    pub sigma_n: f64,
    pub pupil_center: Point,
    pub cr_center: Point,
    pub pupil_gain: f64,
    pub cr_gain: f64,
    pub targets: Vec<Point>,
    pub fixation_frames: usize,
}

impl Default for EyeConfig {
    fn default() -> Self {
        let targets = [-10.0, 0.0, 10.0]
            .iter()
            .flat_map(|&y| [-10.0, 0.0, 10.0].map(|x| Point::new(x, y)))
            .collect();
        Self {
            width: 320,
            height: 240,
            frame_rate_hz: 250.0,
            sclera: 150.0,
            iris_radius: 60.0,
            iris_intensity: 90.0,
            pupil_radius: 28.0,
            pupil_intensity: 20.0,
            cr_radius: 5.0,
            cr_amplitude: 1000.0,
            sigma_n: 4.0,
            pupil_center: Point::new(160.0, 120.0),
            cr_center: Point::new(150.3, 110.6),
            pupil_gain: 4.0,
            cr_gain: 0.8,
            targets,
            fixation_frames: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub grid: GridConfig,
    /// Subsampling stride per grid dimension (r, A, sigma_n, E, I).
    pub stride: [usize; 5],
    pub methods: Vec<Method>,
    pub threshold: ThresholdParams,
    /// Tuples per parallel block; the resume granularity of `eval-sweep`.
    pub chunk: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: crloc::synthgen::build_eval_grid().into(),
            stride: [2; 5],
            methods: vec![Method::Threshold, Method::RadialSymmetry, Method::Cnn],
            threshold: ThresholdParams::default(),
            chunk: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionConfig {
    pub radius: f64,
    pub amplitude: f64,
    pub noise_levels: Vec<f64>,
    pub edge: Edge,
    pub light: f64,
    /// CR position relative to the patch center.
    pub offset: Point,
    pub frames: usize,
    /// Independent noise sequences per noise level.
    pub repeats: usize,
    pub methods: Vec<Method>,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            radius: 6.0,
            amplitude: 1000.0,
            noise_levels: vec![4.0, 10.0],
            edge: Edge::Offset(0.5),
            light: 89.0,
            offset: Point::new(0.3, 0.2),
            frames: 200,
            repeats: 10,
            methods: vec![Method::Threshold, Method::RadialSymmetry, Method::Cnn],
        }
    }
}

impl PrecisionConfig {
    pub fn tuple(&self, sigma_n: f64) -> EvalTuple {
        EvalTuple {
            radius: self.radius,
            amplitude: self.amplitude,
            sigma_n,
            edge: self.edge.into(),
            light: self.light,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Precision window in seconds.
    pub window_s: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window_s: crloc::metrics::DEFAULT_WINDOW_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Root of every random stream in the run.
    pub seed: u64,
    pub synth: SynthConfig,
    pub eye: EyeConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub eval: EvalConfig,
    pub precision: PrecisionConfig,
    pub pipeline: PipelineConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn defaults(preset: Preset) -> Self {
        let (train, finetune) = match preset {
            Preset::Desk => (TrainConfig::desk_stage1(), TrainConfig::desk_stage2()),
            Preset::Full => (TrainConfig::full_stage1(), TrainConfig::full_stage2()),
        };
        Self {
            preset,
            seed: 0,
            synth: SynthConfig {
                stage: 1,
                n: 100,
                distributions: train.distributions.clone(),
            },
            eye: EyeConfig::default(),
            train,
            finetune,
            eval: EvalConfig::default(),
            precision: PrecisionConfig::default(),
            pipeline: PipelineConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// Defaults for `preset` (or the file's `preset` key) overlaid with the
    /// file at `path`.
    pub fn load(path: Option<&Path>, preset: Option<Preset>) -> anyhow::Result<Self> {
        let user = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
                text.parse::<toml::Table>().map_err(|e| {
                    config_err(format!("{}: {}", p.display(), one_line(&e.to_string())))
                })?
            }
            None => toml::Table::new(),
        };
        for section in ["train", "finetune"] {
            if user.get(section).and_then(|s| s.get("seed")).is_some() {
                return Err(config_err(format!(
                    "{section}.seed: set the top-level `seed` instead"
                )));
            }
        }
        let preset = match (preset, user.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => Preset::deserialize(v.clone())
                .map_err(|e| config_err(format!("preset: {}", one_line(&e.to_string()))))?,
            (None, None) => Preset::Desk,
        };
        let mut merged =
            toml::Table::try_from(Self::defaults(preset)).context("serializing defaults")?;
        merge(&mut merged, user);
        merged.insert("preset".into(), toml::Value::try_from(preset)?);
        let cfg: RunConfig =
            serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| {
                let path = e.path().to_string();
                config_err(format!("{path}: {}", one_line(&e.into_inner().to_string())))
            })?;
        Ok(cfg)
    }

    /// Copies the global seed into the sections that carry their own.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.finetune.seed = seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let check = |section: &str, r: crloc::Result<()>| {
            r.map_err(|e| config_err(format!("{section}: {e}")))
        };
        Stage::from_number(self.synth.stage)
            .map_err(|e| config_err(format!("synth.stage: {e}")))?;
        check("synth.distributions", self.synth.distributions.validate())?;
        check("train", self.train.validate())?;
        check("finetune", self.finetune.validate())?;
        check("eval.threshold", self.eval.threshold.validate())?;
        check("pipeline", self.pipeline.validate())?;
        if self.eval.stride.contains(&0) {
            return Err(config_err("eval.stride: strides must be at least 1"));
        }
        if self.eval.chunk == 0 {
            return Err(config_err("eval.chunk: must be positive"));
        }
        if self.precision.frames < 2 || self.precision.repeats == 0 {
            return Err(config_err("precision: need frames >= 2 and repeats >= 1"));
        }
        if self.metrics.window_s.is_nan() || self.metrics.window_s <= 0.0 {
            return Err(config_err("metrics.window_s: must be positive"));
        }
        if self.eye.targets.is_empty()
            || self.eye.fixation_frames == 0
            || self.eye.frame_rate_hz.is_nan()
            || self.eye.frame_rate_hz <= 0.0
        {
            return Err(config_err(
                "eye: need targets, fixation_frames >= 1 and a positive frame rate",
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

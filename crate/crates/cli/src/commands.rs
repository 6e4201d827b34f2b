//! Subcommand implementations. Each one resolves its inputs, runs the
//! library operation and writes its outputs with the audit header.

use std::io::{BufRead, Seek, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use crloc::evaluate::{self, Localizers, EVAL_PATCH_SIZE};
use crloc::io::{self as cio, FrameManifest};
use crloc::localize::Method;
use crloc::metrics::{self, Calibration, FixationTarget, GazeRecord, MetricsRow};
use crloc::neural::{self, CnnLocalizer, NetworkState};
use crloc::pipeline::{self, Pipeline, Refiner};
use crloc::seed::{self, Domain};
use crloc::synthgen::{self, CrSpec, Disk, EyeFrameSpec, LabeledSample, NoiseSpec, Stage};
use crloc::train::{self, EpochRecord, TrainConfig, TrainReport};
use crloc::{ImagePatch, Point};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_err, RunConfig};
use crate::tables::{read_targets, require, write_atomic, write_targets, FrameTable};
use crate::{Command, GlobalArgs};

struct Ctx {
    cfg: RunConfig,
    hash: String,
    timing: bool,
}

impl Ctx {
    fn header(&self) -> String {
        cio::header_line(&self.hash, self.cfg.seed)
    }

    fn write(
        &self,
        path: &Path,
        body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> anyhow::Result<()> {
        let header = self.header();
        write_atomic(path, |b| {
            writeln!(b, "{header}")?;
            body(b)
        })
    }
}

pub fn run(g: &GlobalArgs, cmd: Command) -> anyhow::Result<()> {
    if let Some(p) = &g.config {
        require(p)?;
    }
    let mut cfg = RunConfig::load(g.config.as_deref(), g.preset)?;
    let seed = g.seed.unwrap_or(cfg.seed);
    cfg.set_seed(seed);
    match &cmd {
        Command::Synth(a) => a.apply(&mut cfg)?,
        Command::Train(a) => a.apply(&mut cfg.train),
        Command::Finetune(a) => a.apply(&mut cfg.finetune),
        Command::EvalSweep(a) => a.apply(&mut cfg)?,
        Command::Pipeline(a) => a.apply(&mut cfg),
        Command::EvalPrecision(a) => a.apply(&mut cfg)?,
        _ => {}
    }
    cfg.validate()?;
    if let Some(j) = g.jobs {
        if j == 0 {
            return Err(config_err("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()?;
    }
    if g.print_config {
        eprint!("{}", cfg.to_toml());
    }
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        timing: g.timing,
    };
    match cmd {
        Command::Synth(a) => synth(&ctx, &a),
        Command::Train(a) => train_cmd(&ctx, &a),
        Command::Finetune(a) => finetune(&ctx, &a),
        Command::EvalSweep(a) => eval_sweep(&ctx, &a),
        Command::EvalOracle(a) => eval_oracle(&ctx, &a),
        Command::EvalPrecision(a) => eval_precision(&ctx, &a),
        Command::Pipeline(a) => pipeline_cmd(&ctx, &a),
        Command::Metrics(a) => metrics_cmd(&ctx, &a),
        Command::Calibrate(a) => calibrate(&ctx, &a),
        Command::ModelInfo(a) => model_info(&a),
    }
}

fn load_cnn(path: Option<&Path>, why: &str) -> anyhow::Result<CnnLocalizer> {
    let path = path.ok_or_else(|| {
        config_err(format!(
            "{why} needs a model: pass --model or set CRLOC_MODEL"
        ))
    })?;
    require(path)?;
    let state = neural::load_model(path)?;
    Ok(CnnLocalizer::new(state.network))
}

fn parse_methods(list: &[String]) -> anyhow::Result<Vec<Method>> {
    list.iter()
        .map(|m| {
            m.parse::<Method>()
                .map_err(|e| config_err(format!("--methods: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Labeled training scenes drawn from a stage distribution.
    Scenes,
    /// A fixation sequence of eye frames (see the `[eye]` section).
    Eye,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "scenes")]
    kind: SynthKind,
    /// Stage distribution (1 or 2).
    #[arg(long)]
    stage: Option<u8>,
    /// Number of scenes.
    #[arg(long)]
    n: Option<usize>,
    /// Patch side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(s) = self.stage {
            cfg.synth.stage = s;
        }
        if let Some(n) = self.n {
            cfg.synth.n = n;
        }
        if let Some(s) = self.size {
            cfg.synth.distributions.image_size = s;
        }
        Ok(())
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> anyhow::Result<()> {
    match a.kind {
        SynthKind::Scenes => synth_scenes(ctx, &a.out),
        SynthKind::Eye => synth_eye(ctx, &a.out),
    }
}

fn synth_scenes(ctx: &Ctx, out: &Path) -> anyhow::Result<()> {
    let s = &ctx.cfg.synth;
    let stage = Stage::from_number(s.stage)?;
    std::fs::create_dir_all(out).with_context(|| format!("{}", out.display()))?;
    let mut files = Vec::with_capacity(s.n);
    let mut labels = Vec::with_capacity(s.n);
    for block in (0..s.n).collect::<Vec<_>>().chunks(256) {
        let rendered: Vec<LabeledSample> = block
            .par_iter()
            .map(|&i| {
                let seed = seed::derive_seed(ctx.cfg.seed, Domain::Dataset, i as u64);
                synthgen::render_scene(&synthgen::sample_stage(&s.distributions, stage, seed)?)
            })
            .collect::<crloc::Result<_>>()?;
        for (&i, mut sample) in block.iter().zip(rendered) {
            let name = cio::frame_name(i);
            cio::write_png(out.join(&name), &sample.image)?;
            sample.image = ImagePatch::new(0, 0);
            files.push(name);
            labels.push(sample);
        }
    }
    ctx.write(&out.join("manifest.csv"), |b| {
        cio::write_dataset_manifest(b, &files, &labels)
    })?;
    eprintln!(
        "wrote {} stage-{} scenes to {}",
        s.n,
        s.stage,
        out.display()
    );
    Ok(())
}

fn synth_eye(ctx: &Ctx, out: &Path) -> anyhow::Result<()> {
    let e = &ctx.cfg.eye;
    let per = e.fixation_frames;
    let n = e.targets.len() * per;
    let frames: Vec<synthgen::EyeFrame> = (0..n)
        .into_par_iter()
        .map(|i| {
            let target = e.targets[i / per];
            let pupil = e.pupil_center + target * e.pupil_gain;
            let cr = e.cr_center + target * e.cr_gain;
            synthgen::synth_eye_frame(&EyeFrameSpec {
                width: e.width,
                height: e.height,
                sclera: e.sclera,
                iris: Disk {
                    center: pupil,
                    radius: e.iris_radius,
                    intensity: e.iris_intensity,
                },
                pupil: Disk {
                    center: pupil,
                    radius: e.pupil_radius,
                    intensity: e.pupil_intensity,
                },
                cr: CrSpec::new(cr, e.cr_radius, e.cr_amplitude)?,
                noise: NoiseSpec {
                    sigma_n: e.sigma_n,
                    seed: seed::derive_seed(ctx.cfg.seed, Domain::Sequence, i as u64),
                },
            })
        })
        .collect::<crloc::Result<_>>()?;
    let images: Vec<ImagePatch> = frames.iter().map(|f| f.image.clone()).collect();
    cio::write_frames(
        out,
        &images,
        &FrameManifest {
            frame_rate_hz: e.frame_rate_hz,
            roi: None,
        },
    )?;
    let dt = 1.0 / e.frame_rate_hz;
    let targets: Vec<FixationTarget> = e
        .targets
        .iter()
        .enumerate()
        .map(|(k, &p)| FixationTarget::new(p, (k * per) as f64 * dt, ((k + 1) * per) as f64 * dt))
        .collect::<crloc::Result<_>>()?;
    ctx.write(&out.join("targets.csv"), |b| write_targets(b, &targets))?;
    let truth: Vec<pipeline::FrameResult> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| pipeline::FrameResult {
            index: i,
            pupil: Some(f.pupil_truth),
            cr_threshold: Some(f.cr_truth),
            cr_refined: None,
            flags: Default::default(),
        })
        .collect();
    ctx.write(&out.join("truth.csv"), |b| {
        let mut table = Vec::new();
        pipeline::write_frame_table(&mut table, &truth, Refiner::None, e.frame_rate_hz)?;
        // The ground truth reuses the pipeline layout with its own method name.
        let text = String::from_utf8(table).expect("csv is utf-8").replacen(
            "cr_threshold_",
            "cr_truth_",
            2,
        );
        b.write_all(text.as_bytes())
    })?;
    eprintln!("wrote {n} eye frames to {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch validation report (CSV).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides `train.epochs_max`.
    #[arg(long)]
    epochs: Option<usize>,
}

impl TrainArgs {
    fn apply(&self, t: &mut TrainConfig) {
        if let Some(e) = self.epochs {
            t.epochs_max = e;
        }
    }
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Stage-1 model to fine-tune.
    #[arg(long, env = "CRLOC_MODEL")]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides `finetune.epochs_max`.
    #[arg(long)]
    epochs: Option<usize>,
}

impl FinetuneArgs {
    fn apply(&self, t: &mut TrainConfig) {
        if let Some(e) = self.epochs {
            t.epochs_max = e;
        }
    }
}

fn run_training(
    ctx: &Ctx,
    net: NetworkState,
    cfg: &TrainConfig,
    out: &Path,
    report: Option<&Path>,
) -> anyhow::Result<()> {
    let stage = cfg.stage.number();
    let mut log = |e: &EpochRecord, improved: bool, _: &NetworkState| {
        eprintln!(
            "stage {stage} epoch {:4} val {:.4} px{}",
            e.epoch,
            e.val_error,
            if improved { " *" } else { "" }
        );
    };
    let (net, rep): (NetworkState, TrainReport) = match train::train(net, cfg, &mut log) {
        Ok(r) => r,
        Err(crloc::Error::Diverged { epoch, report: r }) => {
            if let Some(p) = report {
                ctx.write(p, |b| r.write_csv(b, ctx.timing))?;
            }
            return Err(anyhow!("training diverged at epoch {epoch}"));
        }
        Err(e) => return Err(e.into()),
    };
    neural::save_model(&net, out)?;
    if let Some(p) = report {
        ctx.write(p, |b| rep.write_csv(b, ctx.timing))?;
    }
    eprintln!(
        "stage {stage}: best {:.4} px at epoch {} ({}), model {}",
        rep.best_error,
        rep.best_epoch,
        rep.stop_reason,
        out.display()
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let spec = ctx.cfg.preset.network();
    let net = NetworkState::new(
        spec,
        seed::derive_seed(ctx.cfg.seed, Domain::NetworkInit, 0),
    )?;
    run_training(ctx, net, &ctx.cfg.train, &a.out, a.report.as_deref())
}

fn finetune(ctx: &Ctx, a: &FinetuneArgs) -> anyhow::Result<()> {
    require(&a.model)?;
    let net = neural::load_model(&a.model)?;
    run_training(ctx, net, &ctx.cfg.finetune, &a.out, a.report.as_deref())
}

#[derive(Debug, Args)]
pub struct EvalSweepArgs {
    /// Summary table (CSV), appended chunk by chunk.
    #[arg(long)]
    out: PathBuf,
    /// CNN model, needed when the methods include `cnn`.
    #[arg(long, env = "CRLOC_MODEL")]
    model: Option<PathBuf>,
    /// Continue an interrupted run with the same config and seed.
    #[arg(long)]
    resume: bool,
    /// Comma-separated methods; overrides `eval.methods`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// One stride for every grid dimension; overrides `eval.stride`.
    #[arg(long)]
    stride: Option<usize>,
}

impl EvalSweepArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(m) = &self.methods {
            cfg.eval.methods = parse_methods(m)?;
        }
        if let Some(s) = self.stride {
            cfg.eval.stride = [s; 5];
        }
        Ok(())
    }
}

/// Opens the sweep table for appending and returns the number of tuples it
/// already holds.
fn open_sweep_table(
    ctx: &Ctx,
    path: &Path,
    resume: bool,
    per_tuple: usize,
) -> anyhow::Result<(std::fs::File, usize)> {
    let header = ctx.header();
    let columns = evaluate::TABLE_HEADER.join(",");
    let io_ctx = || format!("{}", path.display());
    if resume && path.exists() {
        let mut f = std::fs::OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .with_context(io_ctx)?;
        let mut keep = 0u64;
        let mut rows = 0usize;
        {
            let mut rd = std::io::BufReader::new(&mut f);
            let mut line = String::new();
            let mut n = 0;
            loop {
                line.clear();
                let got = rd.read_line(&mut line).with_context(io_ctx)?;
                if got == 0 || !line.ends_with('\n') {
                    break;
                }
                let text = line.trim_end();
                match n {
                    0 if text != header => {
                        return Err(config_err(format!(
                            "{}: cannot resume, written with a different config or seed",
                            path.display()
                        )))
                    }
                    1 if text != columns => {
                        return Err(config_err(format!("{}: not a sweep table", path.display())))
                    }
                    0 | 1 => {}
                    _ => rows += 1,
                }
                keep += got as u64;
                n += 1;
            }
            if n < 2 {
                return Err(config_err(format!(
                    "{}: incomplete header, cannot resume",
                    path.display()
                )));
            }
        }
        // Drop a torn trailing line and any rows of an unfinished tuple.
        let mut text = std::fs::read_to_string(path).with_context(io_ctx)?;
        text.truncate(keep as usize);
        let extra = rows % per_tuple;
        for _ in 0..extra {
            let cut = text[..text.len() - 1].rfind('\n').map_or(0, |i| i + 1);
            text.truncate(cut);
        }
        f.set_len(text.len() as u64).with_context(io_ctx)?;
        f.seek(std::io::SeekFrom::End(0)).with_context(io_ctx)?;
        Ok((f, rows / per_tuple))
    } else {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
        }
        let mut f = std::fs::File::create(path).with_context(io_ctx)?;
        writeln!(f, "{header}\n{columns}").with_context(io_ctx)?;
        Ok((f, 0))
    }
}

fn eval_sweep(ctx: &Ctx, a: &EvalSweepArgs) -> anyhow::Result<()> {
    let e = &ctx.cfg.eval;
    let methods = &e.methods;
    if methods.is_empty() {
        return Err(config_err("eval.methods: empty"));
    }
    let cnn = if methods.contains(&Method::Cnn) {
        Some(load_cnn(a.model.as_deref(), "method cnn")?)
    } else {
        None
    };
    let locs = Localizers::new(e.threshold, cnn);
    locs.check(methods)
        .map_err(|err| config_err(format!("eval: {err}")))?;
    let tuples = e.grid.grid().tuples(e.stride)?;
    let (mut file, start) = open_sweep_table(ctx, &a.out, a.resume, methods.len())?;
    if start > 0 {
        eprintln!("resuming at tuple {start} of {}", tuples.len());
    }
    let mut done = start;
    let total = tuples.len();
    let out = a.out.clone();
    evaluate::grid_eval_streaming(
        &tuples,
        start,
        methods,
        &locs,
        ctx.cfg.seed,
        EVAL_PATCH_SIZE,
        e.chunk,
        &mut |rows| {
            let io = |source| crloc::Error::Io {
                path: out.clone(),
                source,
            };
            evaluate::write_rows(&mut file, rows).map_err(io)?;
            file.flush().map_err(io)?;
            done += rows.len() / methods.len();
            eprintln!("{done}/{total} tuples");
            Ok(())
        },
    )?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalOracleArgs {
    /// Summary table (CSV): one row per (r, A).
    #[arg(long)]
    out: PathBuf,
    /// Per-step error series (CSV).
    #[arg(long)]
    series: Option<PathBuf>,
}

fn eval_oracle(ctx: &Ctx, a: &EvalOracleArgs) -> anyhow::Result<()> {
    let rows = evaluate::optimal_benchmark(&ctx.cfg.eval.grid.grid())?;
    ctx.write(&a.out, |b| evaluate::write_table(b, &rows))?;
    if let Some(p) = &a.series {
        ctx.write(p, |b| evaluate::write_series(b, &rows))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalPrecisionArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "CRLOC_MODEL")]
    model: Option<PathBuf>,
    /// Comma-separated methods; overrides `precision.methods`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

impl EvalPrecisionArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(m) = &self.methods {
            cfg.precision.methods = parse_methods(m)?;
        }
        Ok(())
    }
}

fn eval_precision(ctx: &Ctx, a: &EvalPrecisionArgs) -> anyhow::Result<()> {
    let p = &ctx.cfg.precision;
    let cnn = if p.methods.contains(&Method::Cnn) {
        Some(load_cnn(a.model.as_deref(), "method cnn")?)
    } else {
        None
    };
    let locs = Localizers::new(ctx.cfg.eval.threshold, cnn);
    locs.check(&p.methods)
        .map_err(|err| config_err(format!("precision: {err}")))?;
    let c = (EVAL_PATCH_SIZE as f64 - 1.0) / 2.0;
    let center = Point::new(c, c) + p.offset;
    let mut rows = Vec::new();
    for &sigma_n in &p.noise_levels {
        for rep in 0..p.repeats {
            let seed = seed::mix(ctx.cfg.seed, rep as u64);
            let res = evaluate::precision_sweep_methods(
                &p.tuple(sigma_n),
                center,
                &p.methods,
                &locs,
                p.frames,
                seed,
            )?;
            for (m, r) in p.methods.iter().zip(res) {
                rows.push((sigma_n, rep, *m, r));
            }
        }
    }
    ctx.write(&a.out, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "sigma_n", "repeat", "method", "rms_s2s", "frames", "failures",
        ])?;
        for (s, rep, m, r) in &rows {
            w.write_record([
                s.to_string(),
                rep.to_string(),
                m.to_string(),
                format!("{:.6}", r.rms),
                r.frames.to_string(),
                r.failures.to_string(),
            ])?;
        }
        w.flush()
    })?;
    for &s in &p.noise_levels {
        for &m in &p.methods {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.0 == s && r.2 == m)
                .map(|r| r.3.rms)
                .collect();
            eprintln!(
                "sigma_n {s}: {m} mean rms_s2s {:.4} px",
                v.iter().sum::<f64>() / v.len() as f64
            );
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Directory of numbered PNG frames with a manifest.toml.
    #[arg(long, env = "CRLOC_FRAMES")]
    frames: PathBuf,
    /// Per-frame table (CSV).
    #[arg(long)]
    out: PathBuf,
    /// none, radial_symmetry or cnn; overrides `pipeline.refiner`.
    #[arg(long, value_parser = parse_refiner)]
    refiner: Option<Refiner>,
    /// CNN model for the cnn refiner.
    #[arg(long, env = "CRLOC_MODEL")]
    model: Option<PathBuf>,
    /// 1 = full resolution, 2 = half resolution.
    #[arg(long)]
    downsample: Option<u8>,
}

fn parse_refiner(s: &str) -> Result<Refiner, String> {
    s.parse().map_err(|e: crloc::Error| e.to_string())
}

impl PipelineArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.pipeline;
        if let Some(r) = self.refiner {
            p.refiner = r;
        }
        if let Some(d) = self.downsample {
            p.downsample = d;
        }
    }
}

fn pipeline_cmd(ctx: &Ctx, a: &PipelineArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.cfg.pipeline.clone();
    require(&a.frames)?;
    let manifest = FrameManifest::read(&a.frames)?;
    if cfg.roi.is_none() {
        cfg.roi = manifest.roi;
    }
    let cnn = match cfg.refiner {
        // An I/O path, so the flag is not part of the hashed config.
        Refiner::Cnn => Some(load_cnn(
            a.model.as_deref().or(cfg.model_path.as_deref()),
            "refiner cnn",
        )?),
        _ => None,
    };
    let frames = cio::read_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(anyhow!("{}: no frames", a.frames.display()));
    }
    let pipe = Pipeline::new(cfg, cnn).map_err(|e| config_err(format!("pipeline: {e}")))?;
    let results = pipe.process_sequence(&frames)?;
    let refiner = pipe.config().refiner;
    ctx.write(&a.out, |b| {
        pipeline::write_frame_table(b, &results, refiner, manifest.frame_rate_hz)
    })?;
    let failed = results
        .iter()
        .filter(|r| !r.flags.code().is_empty())
        .count();
    eprintln!("{} frames, {failed} flagged", results.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Pipeline tables; each one is a trial.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Metrics table (CSV), one row per input and method.
    #[arg(long)]
    out: PathBuf,
    /// Calibration from `crloc calibrate`; switches the signal from CR
    /// position (px) to calibrated gaze (deg).
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Fixation targets (`x,y,onset,offset`); needs a calibration.
    #[arg(long)]
    targets: Option<PathBuf>,
}

/// Record of the present samples of a method column; dropped frames
/// shorten the record while the nominal rate is kept.
fn record(
    table: &FrameTable,
    samples: impl Iterator<Item = Option<Point>>,
) -> anyhow::Result<GazeRecord> {
    let (timestamps, samples): (Vec<f64>, Vec<Point>) = table
        .t
        .iter()
        .zip(samples)
        .filter_map(|(&t, p)| p.map(|p| (t, p)))
        .unzip();
    Ok(GazeRecord {
        timestamps,
        samples,
        sampling_rate: table.rate()?,
    })
}

fn pcr(table: &FrameTable, cr: &[Option<Point>]) -> Vec<Option<Point>> {
    table
        .pupil
        .iter()
        .zip(cr)
        .map(|(p, c)| match (p, c) {
            (Some(p), Some(c)) => Some(*p - *c),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    method: String,
    calibration: Calibration,
}

fn read_calibration(path: &Path) -> anyhow::Result<CalibrationFile> {
    require(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow!("{}: {}", path.display(), e.message()))
}

fn metrics_cmd(ctx: &Ctx, a: &MetricsArgs) -> anyhow::Result<()> {
    let window = ctx.cfg.metrics.window_s;
    let cal = a.calibration.as_deref().map(read_calibration).transpose()?;
    let targets = match (&a.targets, &cal) {
        (Some(_), None) => {
            return Err(config_err(
                "--targets needs --calibration (accuracy is in degrees)",
            ))
        }
        (Some(t), Some(_)) => Some(read_targets(t)?),
        (None, _) => None,
    };
    let mut rows = Vec::new();
    for input in &a.input {
        let table = FrameTable::read(input)?;
        let trial = input
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        for (method, cr) in &table.cr {
            let rec = match &cal {
                Some(c) => record(
                    &table,
                    pcr(&table, cr)
                        .into_iter()
                        .map(|p| p.map(|p| c.calibration.apply(p))),
                )?,
                None => record(&table, cr.iter().copied())?,
            };
            let ctx_err = || format!("{}: {method}", input.display());
            let accuracy = match &targets {
                Some(t) => Some(metrics::accuracy(&rec, t).with_context(ctx_err)?.accuracy),
                None => None,
            };
            rows.push(MetricsRow {
                trial: trial.clone(),
                method: method.clone(),
                rms_s2s: metrics::rms_s2s(&rec, window).with_context(ctx_err)?,
                std: metrics::std_precision(&rec, window).with_context(ctx_err)?,
                accuracy,
            });
        }
    }
    ctx.write(&a.out, |b| metrics::write_metrics_table(b, &rows))
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Pipeline table of the calibration trial.
    #[arg(long)]
    input: PathBuf,
    /// Fixation targets (`x,y,onset,offset`).
    #[arg(long)]
    targets: PathBuf,
    /// CR column to use (`threshold`, `cnn`, `radial_symmetry`, ...).
    #[arg(long, default_value = "threshold")]
    method: String,
    /// Calibration file (TOML).
    #[arg(long)]
    out: PathBuf,
}

fn calibrate(ctx: &Ctx, a: &CalibrateArgs) -> anyhow::Result<()> {
    let table = FrameTable::read(&a.input)?;
    let targets = read_targets(&a.targets)?;
    let rec = record(&table, pcr(&table, table.method(&a.method)?).into_iter())?;
    let cal = metrics::fit_calibration_from_record(&rec, &targets)?;
    let file = CalibrationFile {
        method: a.method.clone(),
        calibration: cal,
    };
    let text = toml::to_string(&file)?;
    ctx.write(&a.out, |b| b.write_all(text.as_bytes()))?;
    eprintln!(
        "calibration residual {:.6} (target units)",
        cal.residual_rms
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ModelInfoArgs {
    #[arg(long, env = "CRLOC_MODEL")]
    model: PathBuf,
}

fn model_info(a: &ModelInfoArgs) -> anyhow::Result<()> {
    require(&a.model)?;
    let state = neural::load_model(&a.model)?;
    let net = &state.network;
    let spec = net.spec();
    let frozen: Vec<String> = spec
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.has_params() && !l.trainable)
        .map(|(i, _)| i.to_string())
        .collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "format_version = {}", neural::FORMAT_VERSION)?;
    writeln!(out, "init_seed = {}", state.init_seed)?;
    writeln!(
        out,
        "input = \"{}x{}\"",
        spec.input_width, spec.input_height
    )?;
    writeln!(out, "parameters = {}", net.parameter_count())?;
    writeln!(out, "adam_step = {}", state.adam.step)?;
    writeln!(out, "frozen_layers = [{}]", frozen.join(", "))?;
    writeln!(out, "\n{}", spec.to_toml())?;
    Ok(())
}

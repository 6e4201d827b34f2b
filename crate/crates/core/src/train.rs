//! Two-stage training on streamed synthetic samples.
//!
//! An epoch is `samples_per_epoch` fresh samples: sample `i` of a run is
//! rendered from `derive_seed(seed, TrainStream, i)` and is never repeated.
//! The validation set is rendered once per run from the `Validation` seed
//! domain. After every epoch (and once before training, as epoch 0) the mean
//! Euclidean validation error is recorded; the best weights are retained and
//! training stops after `early_stop_patience` epochs without improvement.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::ImagePatch;
use crate::neural::{AdamParams, Network, NetworkState};
use crate::seed::{self, Domain};
use crate::synthgen::{render_scene, sample_stage, LabeledSample, Stage, StageDistributions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub adam: AdamParams,
    pub early_stop_patience: usize,
    pub validation_size: usize,
    pub seed: u64,
    /// Conv blocks frozen before training (2 for stage 2 presets).
    pub frozen_blocks: usize,
    /// Scene laws; `image_size` must equal the network input size.
    pub distributions: StageDistributions,
}

impl TrainConfig {
    /// Stage-1 defaults at full scale: batch 4, up to 700 epochs, 300
    /// validation images, learning rate 1e-4.
    pub fn full_stage1() -> Self {
        Self {
            stage: Stage::One,
            epochs_max: 700,
            batch_size: 4,
            samples_per_epoch: 1000,
            adam: AdamParams::with_lr(1e-4),
            early_stop_patience: 25,
            validation_size: 300,
            seed: 0,
            frozen_blocks: 0,
            distributions: StageDistributions::with_size(180),
        }
    }

    /// Stage-2 defaults: learning rate 1e-6, first two conv blocks frozen.
    pub fn full_stage2() -> Self {
        Self {
            stage: Stage::Two,
            adam: AdamParams::with_lr(1e-6),
            frozen_blocks: 2,
            ..Self::full_stage1()
        }
    }

    /// Desk-scale stage 1 on 64x64 patches, at most 100 epochs.
    pub fn desk_stage1() -> Self {
        Self {
            epochs_max: 100,
            adam: AdamParams::with_lr(1e-3),
            distributions: StageDistributions::with_size(64),
            ..Self::full_stage1()
        }
    }

    pub fn desk_stage2() -> Self {
        Self {
            stage: Stage::Two,
            adam: AdamParams::with_lr(3e-4),
            frozen_blocks: 2,
            ..Self::desk_stage1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs_max", self.epochs_max),
            ("batch_size", self.batch_size),
            ("samples_per_epoch", self.samples_per_epoch),
            ("early_stop_patience", self.early_stop_patience),
            ("validation_size", self.validation_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        self.adam.validate()?;
        self.distributions.validate()
    }

    fn check_network(&self, net: &Network<f32>) -> Result<()> {
        let spec = net.spec();
        let size = self.distributions.image_size;
        if spec.input_width != size || spec.input_height != size {
            return Err(Error::invalid(format!(
                "training images are {size}x{size} but the network expects {}x{}",
                spec.input_width, spec.input_height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    Diverged,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
            StopReason::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean Euclidean validation error in pixels.
    pub val_error: f64,
    /// Mean batch loss over the epoch; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: Stage,
    /// Epoch 0 holds the error of the initial weights.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_error: f64,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn series(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_error).collect()
    }

    /// Same as `==` but ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            r.wall_time_s = 0.0;
            for e in &mut r.epochs {
                e.wall_ms = 0;
            }
            r
        };
        strip(self) == strip(other)
    }

    /// `epoch,val_error,train_loss[,wall_ms]` rows.
    pub fn write_csv(&self, out: &mut impl Write, timing: bool) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epoch", "val_error", "train_loss"];
        if timing {
            header.push("wall_ms");
        }
        w.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![
                e.epoch.to_string(),
                format!("{:.6}", e.val_error),
                e.train_loss.map(|l| format!("{l:.6}")).unwrap_or_default(),
            ];
            if timing {
                row.push(e.wall_ms.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Sample `index` of the training stream.
pub fn stream_sample(
    dist: &StageDistributions,
    stage: Stage,
    seed: u64,
    index: u64,
) -> Result<LabeledSample> {
    let spec = sample_stage(
        dist,
        stage,
        seed::derive_seed(seed, Domain::TrainStream, index),
    )?;
    render_scene(&spec)
}

/// Unbounded training stream; never repeats a sample seed.
pub fn sample_stream(
    dist: &StageDistributions,
    stage: Stage,
    seed: u64,
) -> impl Iterator<Item = Result<LabeledSample>> + '_ {
    (0u64..).map(move |i| stream_sample(dist, stage, seed, i))
}

/// Fixed validation set for a run.
pub fn validation_set(
    dist: &StageDistributions,
    stage: Stage,
    seed: u64,
    n: usize,
) -> Result<Vec<LabeledSample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let spec = sample_stage(dist, stage, seed::derive_seed(seed, Domain::Validation, i))?;
            render_scene(&spec)
        })
        .collect()
}

/// Mean Euclidean distance between predictions and truths, in pixels.
pub fn validate(net: &Network<f32>, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let errors: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let p = net.forward(std::slice::from_ref(&s.image))?[0];
            Ok(p.distance(s.truth))
        })
        .collect::<Result<_>>()?;
    Ok(mean_error(&errors))
}

/// Mean of per-sample errors, summed in order.
pub fn mean_error(errors: &[f64]) -> f64 {
    errors.iter().sum::<f64>() / errors.len() as f64
}

/// Per-epoch hook: receives the epoch record, whether it improved on the
/// best error, and the current state.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, bool, &NetworkState) + 'a;

pub fn run_stage1(net: NetworkState, cfg: &TrainConfig) -> Result<(NetworkState, TrainReport)> {
    if cfg.stage != Stage::One {
        return Err(Error::invalid("run_stage1 needs a stage-1 config"));
    }
    train(net, cfg, &mut |_, _, _| {})
}

/// Fine-tunes stage-1 weights: freezes the first `cfg.frozen_blocks` conv
/// blocks and trains on the stage-2 stream.
pub fn run_stage2(net: NetworkState, cfg: &TrainConfig) -> Result<(NetworkState, TrainReport)> {
    if cfg.stage != Stage::Two {
        return Err(Error::invalid("run_stage2 needs a stage-2 config"));
    }
    train(net, cfg, &mut |_, _, _| {})
}

/// Generic training loop behind both stages.
pub fn train(
    mut net: NetworkState,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<(NetworkState, TrainReport)> {
    cfg.validate()?;
    cfg.check_network(&net.network)?;
    if cfg.frozen_blocks > 0 {
        net.network
            .set_conv_blocks_trainable(cfg.frozen_blocks, false)?;
    }
    let started = Instant::now();
    let dist = &cfg.distributions;
    let val = validation_set(dist, cfg.stage, cfg.seed, cfg.validation_size)?;

    let mut report = TrainReport {
        stage: cfg.stage,
        epochs: Vec::new(),
        best_epoch: 0,
        best_error: f64::INFINITY,
        stop_reason: StopReason::MaxEpochs,
        wall_time_s: 0.0,
    };
    let initial = validate(&net.network, &val)?;
    if !initial.is_finite() {
        report.stop_reason = StopReason::Diverged;
        return Err(Error::Diverged {
            epoch: 0,
            report: Box::new(report),
        });
    }
    let first = EpochRecord {
        epoch: 0,
        val_error: initial,
        train_loss: None,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    report.epochs.push(first);
    report.best_error = initial;
    hook(&first, true, &net);
    let mut best = net.clone();
    let mut stale = 0;

    let batches = cfg.samples_per_epoch.div_ceil(cfg.batch_size);
    for epoch in 1..=cfg.epochs_max {
        let base = ((epoch - 1) * cfg.samples_per_epoch) as u64;
        let samples: Vec<LabeledSample> = (0..cfg.samples_per_epoch as u64)
            .into_par_iter()
            .map(|i| stream_sample(dist, cfg.stage, cfg.seed, base + i))
            .collect::<Result<_>>()?;
        let mut loss_sum = 0.0;
        for b in 0..batches {
            let chunk = &samples[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(samples.len())];
            let images: Vec<ImagePatch> = chunk.iter().map(|s| s.image.clone()).collect();
            let truth: Vec<Point> = chunk.iter().map(|s| s.truth).collect();
            let (loss, grads) = net.backward(&images, &truth)?;
            loss_sum += f64::from(loss);
            net.adam_step(&grads, &cfg.adam)?;
        }
        let train_loss = loss_sum / batches as f64;
        let val_error = validate(&net.network, &val)?;
        let record = EpochRecord {
            epoch,
            val_error,
            train_loss: Some(train_loss),
            wall_ms: started.elapsed().as_millis() as u64,
        };
        report.epochs.push(record);
        if !val_error.is_finite() || !train_loss.is_finite() {
            report.stop_reason = StopReason::Diverged;
            report.wall_time_s = started.elapsed().as_secs_f64();
            return Err(Error::Diverged {
                epoch,
                report: Box::new(report),
            });
        }
        let improved = val_error < report.best_error;
        if improved {
            report.best_error = val_error;
            report.best_epoch = epoch;
            best = net.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        hook(&record, improved, &net);
        if stale >= cfg.early_stop_patience {
            report.stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((best, report))
}

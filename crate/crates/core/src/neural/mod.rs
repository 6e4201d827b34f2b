//! Convolutional regression network with exact backpropagation.
//!
//! Layer semantics:
//!
//! - `conv`: valid cross-correlation (no kernel flip), configurable stride,
//!   one bias per filter. Weights are laid out `[filter][channel][ky][kx]`.
//! - `max_pool`: non-overlapping `size x size` windows; trailing rows or
//!   columns that do not fill a window are dropped. Ties go to the first
//!   maximum in raster order.
//! - `activation`: ReLU.
//! - `flatten`: reinterprets `(c, h, w)` as a vector in `c, h, w` order.
//! - `dense`: `y = W x + b`, `W` row-major `units x inputs`.
//!
//! The network output is the CR center `(x, y)` in input-pixel coordinates.
//! Training uses mean squared error over batch and both coordinates.

mod adam;
mod format;
mod scalar;

use std::ops::Range;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::image::ImagePatch;
use crate::localize::{LocalizationResult, Localizer, Method};
use crate::seed;
use crate::{Error, Result};

pub use adam::{adam_step, AdamParams, AdamState};
pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use scalar::Scalar;
use scalar::{row_major, transposed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    MaxPool {
        #[serde(default = "two")]
        size: usize,
    },
    Activation,
    Flatten,
    Dense {
        units: usize,
    },
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default = "yes")]
    pub trainable: bool,
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            trainable: true,
        }
    }

    pub fn conv(filters: usize, kernel: usize) -> Self {
        Self::new(LayerKind::Conv {
            filters,
            kernel,
            stride: 1,
        })
    }

    pub fn pool() -> Self {
        Self::new(LayerKind::MaxPool { size: 2 })
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Activation)
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    pub fn dense(units: usize) -> Self {
        Self::new(LayerKind::Dense { units })
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Dense { .. })
    }
}

/// Activation shape `(channels, height, width)`; vectors are `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Input height in pixels.
    pub input_height: usize,
    /// Input width in pixels.
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Seven 3x3 conv layers (64, 64, 128, 128, 256, 256, 512) with ReLU,
    /// 2x2 max pooling after the first four, then dense(256) + ReLU and
    /// dense(2), on 180x180 inputs.
    pub fn full() -> Self {
        Self::conv_stack(180, &[64, 64, 128, 128, 256, 256, 512], 4, 256)
    }

    /// Desk-scale preset: four 3x3 conv layers (8, 16, 32, 32) with pooling
    /// after the first three, dense(64), on 64x64 inputs.
    pub fn desk() -> Self {
        Self::conv_stack(64, &[8, 16, 32, 32], 3, 64)
    }

    /// `filters.len()` 3x3 conv + ReLU layers, the first `pooled` of them
    /// followed by 2x2 max pooling, then flatten, dense(`hidden`) + ReLU,
    /// dense(2).
    pub fn conv_stack(size: usize, filters: &[usize], pooled: usize, hidden: usize) -> Self {
        let mut layers = Vec::new();
        for (i, &f) in filters.iter().enumerate() {
            layers.push(LayerSpec::conv(f, 3));
            layers.push(LayerSpec::relu());
            if i < pooled {
                layers.push(LayerSpec::pool());
            }
        }
        layers.push(LayerSpec::flatten());
        layers.push(LayerSpec::dense(hidden));
        layers.push(LayerSpec::relu());
        layers.push(LayerSpec::dense(2));
        Self {
            input_height: size,
            input_width: size,
            layers,
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(1, self.input_height, self.input_width)
    }

    /// Output shape of every layer; errors name the first layer whose input
    /// it cannot accept.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut cur = self.input_shape();
        if cur.is_empty() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                detail: "empty input".into(),
            });
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |detail: String| Error::ShapeMismatch { layer: i, detail };
            cur = match layer.kind {
                LayerKind::Conv {
                    filters,
                    kernel,
                    stride,
                } => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("conv parameters must be positive".into()));
                    }
                    if cur.height < kernel || cur.width < kernel {
                        return Err(bad(format!(
                            "conv kernel {kernel} larger than input {}x{}",
                            cur.height, cur.width
                        )));
                    }
                    Shape::new(
                        filters,
                        (cur.height - kernel) / stride + 1,
                        (cur.width - kernel) / stride + 1,
                    )
                }
                LayerKind::MaxPool { size } => {
                    if size == 0 || cur.height < size || cur.width < size {
                        return Err(bad(format!(
                            "pool window {size} does not fit input {}x{}",
                            cur.height, cur.width
                        )));
                    }
                    Shape::new(cur.channels, cur.height / size, cur.width / size)
                }
                LayerKind::Activation => cur,
                LayerKind::Flatten => Shape::new(cur.len(), 1, 1),
                LayerKind::Dense { units } => {
                    if cur.height != 1 || cur.width != 1 {
                        return Err(bad("dense layer needs a flattened input".into()));
                    }
                    if units == 0 {
                        return Err(bad("dense layer needs at least one unit".into()));
                    }
                    Shape::new(units, 1, 1)
                }
            };
            out.push(cur);
        }
        match out.last() {
            Some(s) if *s == Shape::new(2, 1, 1) => Ok(out),
            _ => Err(Error::ShapeMismatch {
                layer: self.layers.len().saturating_sub(1),
                detail: "network must end in exactly two outputs".into(),
            }),
        }
    }

    /// Layer ranges of the convolutional blocks: each block starts at a conv
    /// layer and runs up to the next conv layer or the first non-conv-stage
    /// layer (flatten / dense).
    pub fn conv_blocks(&self) -> Vec<Range<usize>> {
        let mut blocks = Vec::new();
        let mut start = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer.kind {
                LayerKind::Conv { .. } => {
                    if let Some(s) = start.replace(i) {
                        blocks.push(s..i);
                    }
                }
                LayerKind::Flatten | LayerKind::Dense { .. } => {
                    if let Some(s) = start.take() {
                        blocks.push(s..i);
                    }
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            blocks.push(s..self.layers.len());
        }
        blocks
    }

    /// Human-readable structured dump.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ModelFormat(format!("network spec: {e}")))
    }
}

/// Weights and biases of one conv or dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Params<T> {
    fn zeros_like(other: &Params<T>) -> Self {
        Self {
            weights: vec![T::zero(); other.weights.len()],
            bias: vec![T::zero(); other.bias.len()],
        }
    }

    fn add_assign(&mut self, other: &Params<T>) {
        for (a, &b) in self.weights.iter_mut().zip(&other.weights) {
            *a = *a + b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + b;
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cast<U: Scalar>(&self) -> Params<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from(*x).expect("castable")).collect();
        Params {
            weights: c(&self.weights),
            bias: c(&self.bias),
        }
    }
}

/// A network: its spec and the parameters of every conv/dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    params: Vec<Option<Params<T>>>,
}

/// Per-layer gradients. `None` for parameterless or frozen layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Option<Params<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.weights.iter().chain(&p.bias))
            .fold(T::zero(), |m, &g| m.max(g.abs()))
    }
}

/// Per-sample intermediate values kept for backpropagation.
struct Trace<T> {
    /// `inputs[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Vec<T>>,
    /// Column matrices of conv layers.
    cols: Vec<Option<Vec<T>>>,
    /// Argmax (flat input index) of every pool output.
    argmax: Vec<Option<Vec<usize>>>,
}

impl<T: Scalar> Network<T> {
    /// He-normal initialization (`std = sqrt(2 / fan_in)`) with zero biases;
    /// the final layer's bias starts at the geometric center of the input so
    /// an untrained network predicts the patch center.
    pub fn init(spec: NetworkSpec, init_seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = seed::rng(seed::derive_seed(init_seed, seed::Domain::NetworkInit, 0));
        let mut prev = spec.input_shape();
        let mut params = Vec::with_capacity(spec.layers.len());
        for (layer, &shape) in spec.layers.iter().zip(&shapes) {
            let p = match layer.kind {
                LayerKind::Conv {
                    filters, kernel, ..
                } => {
                    let fan_in = prev.channels * kernel * kernel;
                    Some(he_params(&mut rng, filters, fan_in))
                }
                LayerKind::Dense { units } => Some(he_params(&mut rng, units, prev.len())),
                _ => None,
            };
            params.push(p);
            prev = shape;
        }
        if let Some(Some(last)) = params.last_mut() {
            last.bias[0] = T::from_f64((spec.input_width as f64 - 1.0) / 2.0);
            last.bias[1] = T::from_f64((spec.input_height as f64 - 1.0) / 2.0);
        }
        Ok(Self {
            spec,
            shapes,
            params,
        })
    }

    /// Builds a network from explicit parameters (validated against the spec).
    pub fn from_params(spec: NetworkSpec, params: Vec<Option<Params<T>>>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::ModelFormat(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        let net = Self {
            spec,
            shapes,
            params,
        };
        for i in 0..net.spec.layers.len() {
            let expected = net.param_counts(i);
            let found = net.params[i]
                .as_ref()
                .map(|p| (p.weights.len(), p.bias.len()));
            if expected != found {
                return Err(Error::ShapeMismatch {
                    layer: i,
                    detail: format!("expected parameter counts {expected:?}, found {found:?}"),
                });
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn params(&self) -> &[Option<Params<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params<T>>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    fn input_shape_of(&self, layer: usize) -> Shape {
        if layer == 0 {
            self.spec.input_shape()
        } else {
            self.shapes[layer - 1]
        }
    }

    fn param_counts(&self, layer: usize) -> Option<(usize, usize)> {
        let input = self.input_shape_of(layer);
        match self.spec.layers[layer].kind {
            LayerKind::Conv {
                filters, kernel, ..
            } => Some((filters * input.channels * kernel * kernel, filters)),
            LayerKind::Dense { units } => Some((units * input.len(), units)),
            _ => None,
        }
    }

    /// Sets every parameter to zero.
    pub fn zero_params(&mut self) {
        for p in self.params.iter_mut().flatten() {
            p.weights.fill(T::zero());
            p.bias.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.as_ref().map(Params::cast))
                .collect(),
        }
    }

    /// Marks `layers` trainable or frozen.
    pub fn set_trainable(&mut self, layers: &[usize], trainable: bool) -> Result<()> {
        if let Some(&bad) = layers.iter().find(|&&i| i >= self.spec.layers.len()) {
            return Err(Error::invalid(format!(
                "layer index {bad} out of range (network has {} layers)",
                self.spec.layers.len()
            )));
        }
        for &i in layers {
            self.spec.layers[i].trainable = trainable;
        }
        Ok(())
    }

    /// Freezes (or unfreezes) the layers of the first `n` conv blocks.
    pub fn set_conv_blocks_trainable(&mut self, n: usize, trainable: bool) -> Result<()> {
        let blocks = self.spec.conv_blocks();
        if n > blocks.len() {
            return Err(Error::invalid(format!(
                "network has only {} conv blocks",
                blocks.len()
            )));
        }
        let layers: Vec<usize> = blocks[..n].iter().flat_map(|r| r.clone()).collect();
        self.set_trainable(&layers, trainable)
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        let expected = self.spec.input_shape().len();
        if input.len() != expected {
            return Err(Error::ShapeMismatch {
                layer: 0,
                detail: format!(
                    "input has {} values, layer 0 expects {}x{} = {expected}",
                    input.len(),
                    self.spec.input_height,
                    self.spec.input_width
                ),
            });
        }
        Ok(())
    }

    /// Output of layer `layer` given its input.
    fn layer_forward(
        &self,
        layer: usize,
        input: &[T],
        keep: bool,
    ) -> (Vec<T>, Option<Vec<T>>, Option<Vec<usize>>) {
        let in_shape = self.input_shape_of(layer);
        let out_shape = self.shapes[layer];
        match self.spec.layers[layer].kind {
            LayerKind::Conv { kernel, stride, .. } => {
                let p = self.params[layer].as_ref().expect("conv params");
                let col = im2col(input, in_shape, out_shape, kernel, stride);
                let ckk = in_shape.channels * kernel * kernel;
                let n = out_shape.height * out_shape.width;
                let mut out = Vec::with_capacity(out_shape.len());
                for &b in &p.bias {
                    out.extend(std::iter::repeat_n(b, n));
                }
                T::gemm(
                    out_shape.channels,
                    ckk,
                    n,
                    &p.weights,
                    row_major(ckk),
                    &col,
                    row_major(n),
                    T::one(),
                    &mut out,
                );
                (out, keep.then_some(col), None)
            }
            LayerKind::MaxPool { size } => {
                let (out, idx) = max_pool(input, in_shape, out_shape, size);
                (out, None, keep.then_some(idx))
            }
            LayerKind::Activation => (
                input
                    .iter()
                    .map(|&v| if v > T::zero() { v } else { T::zero() })
                    .collect(),
                None,
                None,
            ),
            LayerKind::Flatten => (input.to_vec(), None, None),
            LayerKind::Dense { units } => {
                let p = self.params[layer].as_ref().expect("dense params");
                let mut out = p.bias.clone();
                T::gemm(
                    units,
                    input.len(),
                    1,
                    &p.weights,
                    row_major(input.len()),
                    input,
                    (1, 1),
                    T::one(),
                    &mut out,
                );
                (out, None, None)
            }
        }
    }

    fn trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let n = self.spec.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(n);
        let mut argmax = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for i in 0..n {
            let (out, col, idx) = self.layer_forward(i, &activations[i], true);
            activations.push(out);
            cols.push(col);
            argmax.push(idx);
        }
        Ok(Trace {
            activations,
            cols,
            argmax,
        })
    }

    /// Runs layers `from..` on `input` (the input of layer `from`) and
    /// returns every layer output from there on.
    pub fn forward_from(&self, from: usize, input: &[T]) -> Vec<Vec<T>> {
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.spec.layers.len() - from);
        for i in from..self.spec.layers.len() {
            let x = outs.last().map_or(input, |v| v.as_slice());
            let (out, _, _) = self.layer_forward(i, x, false);
            outs.push(out);
        }
        outs
    }

    /// Every layer's output for one input, starting with the input itself.
    pub fn activations(&self, input: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_input(input)?;
        let mut all = vec![input.to_vec()];
        all.extend(self.forward_from(0, input));
        Ok(all)
    }

    /// Prediction for one raw input vector (row-major, normalized intensities).
    pub fn predict_raw(&self, input: &[T]) -> Result<[T; 2]> {
        self.check_input(input)?;
        let out = self
            .forward_from(0, input)
            .pop()
            .expect("non-empty network");
        Ok([out[0], out[1]])
    }

    /// Predicted CR centers for a batch of patches.
    pub fn forward(&self, batch: &[ImagePatch]) -> Result<Vec<Point>> {
        batch
            .iter()
            .map(|img| {
                let [x, y] = self.predict_raw(&self.image_input(img)?)?;
                Ok(Point::new(to_f64(x), to_f64(y)))
            })
            .collect()
    }

    /// Network input for a patch, checking its size.
    pub fn image_input(&self, img: &ImagePatch) -> Result<Vec<T>> {
        if img.width() != self.spec.input_width || img.height() != self.spec.input_height {
            return Err(Error::ShapeMismatch {
                layer: 0,
                detail: format!(
                    "image is {}x{}, network expects {}x{}",
                    img.width(),
                    img.height(),
                    self.spec.input_width,
                    self.spec.input_height
                ),
            });
        }
        Ok(img
            .levels()
            .iter()
            .map(|&l| T::from_f64(f64::from(l) / 255.0))
            .collect())
    }

    /// Loss and exact gradients of [`loss_mse`] over a batch of raw inputs.
    pub fn backward_raw(&self, inputs: &[Vec<T>], truth: &[Point]) -> Result<(T, Gradients<T>)> {
        if inputs.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        if inputs.len() != truth.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                truth.len()
            )));
        }
        let scale = T::from_f64(1.0 / inputs.len() as f64);
        // Per-sample gradients (parallel), reduced in sample order.
        let per_sample: Vec<Result<(T, Gradients<T>)>> = {
            use rayon::prelude::*;
            inputs
                .par_iter()
                .zip(truth.par_iter())
                .map(|(x, t)| self.sample_gradients(x, *t, scale))
                .collect()
        };
        let mut total_loss = T::zero();
        let mut acc: Option<Gradients<T>> = None;
        for r in per_sample {
            let (loss, g) = r?;
            total_loss = total_loss + loss;
            match acc.as_mut() {
                None => acc = Some(g),
                Some(a) => {
                    for (dst, src) in a.layers.iter_mut().zip(&g.layers) {
                        if let (Some(d), Some(s)) = (dst.as_mut(), src.as_ref()) {
                            d.add_assign(s);
                        }
                    }
                }
            }
        }
        Ok((total_loss * scale, acc.expect("non-empty batch")))
    }

    /// Sample contribution: squared error / 2 (mean over the two outputs),
    /// and gradients scaled by `scale` (1 / batch size).
    fn sample_gradients(&self, input: &[T], truth: Point, scale: T) -> Result<(T, Gradients<T>)> {
        let trace = self.trace(input)?;
        let out = trace.activations.last().expect("output");
        let half = T::from_f64(0.5);
        let ex = out[0] - T::from_f64(truth.x);
        let ey = out[1] - T::from_f64(truth.y);
        let loss = half * (ex * ex + ey * ey);
        // dL/dout with L = mean over batch and coordinates.
        let mut delta = vec![ex * scale, ey * scale];

        let n = self.spec.layers.len();
        // Lowest layer that needs an input gradient.
        let lowest = (0..n)
            .find(|&i| self.spec.layers[i].trainable && self.params[i].is_some())
            .unwrap_or(n);
        let mut grads: Vec<Option<Params<T>>> = vec![None; n];
        for i in (lowest..n).rev() {
            let input = &trace.activations[i];
            let in_shape = self.input_shape_of(i);
            let out_shape = self.shapes[i];
            let need_input_grad = i > lowest;
            let layer = &self.spec.layers[i];
            match layer.kind {
                LayerKind::Conv { kernel, stride, .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let col = trace.cols[i].as_ref().expect("conv trace");
                    let ckk = in_shape.channels * kernel * kernel;
                    let hw = out_shape.height * out_shape.width;
                    if layer.trainable {
                        let mut gw = vec![T::zero(); p.weights.len()];
                        T::gemm(
                            out_shape.channels,
                            hw,
                            ckk,
                            &delta,
                            row_major(hw),
                            col,
                            transposed(hw),
                            T::zero(),
                            &mut gw,
                        );
                        let gb = delta.chunks(hw).map(|c| c.iter().copied().sum()).collect();
                        grads[i] = Some(Params {
                            weights: gw,
                            bias: gb,
                        });
                    }
                    if need_input_grad {
                        let mut dcol = vec![T::zero(); ckk * hw];
                        T::gemm(
                            ckk,
                            out_shape.channels,
                            hw,
                            &p.weights,
                            transposed(ckk),
                            &delta,
                            row_major(hw),
                            T::zero(),
                            &mut dcol,
                        );
                        delta = col2im(&dcol, in_shape, out_shape, kernel, stride);
                    }
                }
                LayerKind::Dense { units } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let m = input.len();
                    if layer.trainable {
                        let mut gw = Vec::with_capacity(units * m);
                        for &d in &delta {
                            gw.extend(input.iter().map(|&x| d * x));
                        }
                        grads[i] = Some(Params {
                            weights: gw,
                            bias: delta.clone(),
                        });
                    }
                    if need_input_grad {
                        let mut dx = vec![T::zero(); m];
                        T::gemm(
                            m,
                            units,
                            1,
                            &p.weights,
                            transposed(m),
                            &delta,
                            (1, 1),
                            T::zero(),
                            &mut dx,
                        );
                        delta = dx;
                    }
                }
                LayerKind::MaxPool { .. } => {
                    if need_input_grad {
                        let idx = trace.argmax[i].as_ref().expect("pool trace");
                        let mut dx = vec![T::zero(); in_shape.len()];
                        for (&j, &d) in idx.iter().zip(&delta) {
                            dx[j] = dx[j] + d;
                        }
                        delta = dx;
                    }
                }
                LayerKind::Activation => {
                    for (d, &x) in delta.iter_mut().zip(input) {
                        if x <= T::zero() {
                            *d = T::zero();
                        }
                    }
                }
                LayerKind::Flatten => {}
            }
        }
        Ok((loss, Gradients { layers: grads }))
    }

    /// Loss and gradients for a batch of patches with ground-truth centers.
    pub fn backward(&self, batch: &[ImagePatch], truth: &[Point]) -> Result<(T, Gradients<T>)> {
        let inputs = batch
            .iter()
            .map(|img| self.image_input(img))
            .collect::<Result<Vec<_>>>()?;
        self.backward_raw(&inputs, truth)
    }
}

fn he_params<T: Scalar>(rng: &mut seed::Rng, units: usize, fan_in: usize) -> Params<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    Params {
        weights: (0..units * fan_in)
            .map(|_| T::from_f64(normal.sample(rng)))
            .collect(),
        bias: vec![T::zero(); units],
    }
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("finite")
}

fn im2col<T: Scalar>(input: &[T], s: Shape, o: Shape, k: usize, stride: usize) -> Vec<T> {
    let n = o.height * o.width;
    let mut col = vec![T::zero(); s.channels * k * k * n];
    for c in 0..s.channels {
        let plane = &input[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * n..(row + 1) * n];
                for oy in 0..o.height {
                    let src = &plane[(oy * stride + ky) * s.width + kx..];
                    let d = &mut dst[oy * o.width..(oy + 1) * o.width];
                    if stride == 1 {
                        d.copy_from_slice(&src[..o.width]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * stride];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &[T], s: Shape, o: Shape, k: usize, stride: usize) -> Vec<T> {
    let n = o.height * o.width;
    let mut out = vec![T::zero(); s.len()];
    for c in 0..s.channels {
        let plane = &mut out[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * n..(row + 1) * n];
                for oy in 0..o.height {
                    let base = (oy * stride + ky) * s.width + kx;
                    for ox in 0..o.width {
                        let j = base + ox * stride;
                        plane[j] = plane[j] + src[oy * o.width + ox];
                    }
                }
            }
        }
    }
    out
}

fn max_pool<T: Scalar>(input: &[T], s: Shape, o: Shape, size: usize) -> (Vec<T>, Vec<usize>) {
    let mut out = Vec::with_capacity(o.len());
    let mut idx = Vec::with_capacity(o.len());
    for c in 0..s.channels {
        let base = c * s.height * s.width;
        for oy in 0..o.height {
            for ox in 0..o.width {
                let mut best = base + oy * size * s.width + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let j = base + (oy * size + dy) * s.width + ox * size + dx;
                        if input[j] > input[best] {
                            best = j;
                        }
                    }
                }
                out.push(input[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

/// Mean over batch and both coordinates of the squared error, in pixels².
pub fn loss_mse(pred: &[Point], truth: &[Point]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let d = *p - *t;
            d.x * d.x + d.y * d.y
        })
        .sum();
    Ok(sum / (2.0 * pred.len() as f64))
}

/// A network together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub network: Network<f32>,
    pub adam: AdamState<f32>,
    pub init_seed: u64,
}

impl NetworkState {
    pub fn new(spec: NetworkSpec, init_seed: u64) -> Result<Self> {
        let network = Network::init(spec, init_seed)?;
        let adam = AdamState::for_network(&network);
        Ok(Self {
            network,
            adam,
            init_seed,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn forward(&self, batch: &[ImagePatch]) -> Result<Vec<Point>> {
        self.network.forward(batch)
    }

    pub fn backward(&self, batch: &[ImagePatch], truth: &[Point]) -> Result<(f32, Gradients<f32>)> {
        self.network.backward(batch, truth)
    }

    pub fn set_trainable(&mut self, layers: &[usize], trainable: bool) -> Result<()> {
        self.network.set_trainable(layers, trainable)
    }

    pub fn adam_step(&mut self, grads: &Gradients<f32>, p: &AdamParams) -> Result<()> {
        adam_step(&mut self.network, &mut self.adam, grads, p)
    }
}

/// CNN refiner over an immutable, shareable network snapshot.
///
/// Patches larger than the network input are center-cropped to the input
/// size (the size difference must be even so geometric centers coincide);
/// the estimate is mapped back to the full patch.
#[derive(Debug, Clone)]
pub struct CnnLocalizer {
    network: Arc<Network<f32>>,
}

impl CnnLocalizer {
    pub fn new(network: Network<f32>) -> Self {
        Self {
            network: Arc::new(network),
        }
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn input_size(&self) -> (usize, usize) {
        let s = self.network.spec();
        (s.input_width, s.input_height)
    }
}

impl Localizer for CnnLocalizer {
    fn method(&self) -> Method {
        Method::Cnn
    }

    fn locate(&self, img: &ImagePatch) -> Result<LocalizationResult> {
        let (w, h) = self.input_size();
        let (dw, dh) = (
            img.width() as i64 - w as i64,
            img.height() as i64 - h as i64,
        );
        if dw < 0 || dh < 0 || dw % 2 != 0 || dh % 2 != 0 {
            return Err(Error::ShapeMismatch {
                layer: 0,
                detail: format!(
                    "cannot center a {w}x{h} network input in a {}x{} patch",
                    img.width(),
                    img.height()
                ),
            });
        }
        let (x0, y0) = (dw / 2, dh / 2);
        let patch = if dw == 0 && dh == 0 {
            img.clone()
        } else {
            img.crop(x0, y0, w, h)
        };
        let p = self.network.forward(std::slice::from_ref(&patch))?[0];
        Ok(LocalizationResult {
            center: p + Point::new(x0 as f64, y0 as f64),
            method: Method::Cnn,
            diagnostics: Default::default(),
        })
    }
}

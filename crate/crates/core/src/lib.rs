//! Sub-pixel localization of corneal reflection (CR) centers in eye images.
//!
//! The crate is organized around the data flow of a CR localization study:
//!
//! - [`synthgen`] renders parameterized synthetic CR images (saturated
//!   Gaussian on a split-luminance background with pixel noise and 8-bit
//!   quantization) and draws training scenes from the two stage distributions.
//! - [`localize`] holds the algorithmic localizers: thresholding + binary
//!   centroid, radial symmetry and intensity center of mass, plus the
//!   information-limit oracle.
//! - [`neural`] is a small convolutional regression network with exact
//!   backpropagation and Adam.
//! - [`train`] runs the two-stage training regime on streamed synthetic data.
//! - [`evaluate`] is the synthetic accuracy / precision harness.
//! - [`pipeline`] is the coarse-to-fine frame pipeline for full eye frames.
//! - [`metrics`] computes eye-tracking data quality (RMS-S2S, STD, accuracy)
//!   and the polynomial P-CR calibration.
//!
//! All pixel coordinates follow one convention: pixel `(i, j)` (column `i`,
//! row `j`) has its center at continuous coordinate `(i, j)`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod image;
pub mod io;
pub mod localize;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod seed;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result};
pub use geometry::Point;
pub use image::ImagePatch;

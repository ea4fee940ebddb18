//! Post-hoc multi-class confidence calibration.
//!
//! The crate reduces a K-class classifier's outputs to one-vs-rest binary
//! problems, fits histogram binning calibrators whose bin edges maximize the
//! mutual information between labels and quantized logits (I-Max), and
//! provides baseline binners, temperature/Platt scaling, and an ECE-centric
//! evaluation suite.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the reference precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod calibrator;
pub mod data;
pub mod error;
pub mod info;
pub mod metrics;
pub mod scalar;
pub mod scaling;
pub mod synth;

pub use binning::{Binner, ImaxConfig, ImaxTrace, RepStrategy};
pub use calibrator::{Calibrator, FitConfig, Method, ScalerChoice, Strategy};
pub use data::{BinaryCalibrationSet, ClassGrouping, PredictionMatrix, ScoreKind, ScoreMatrix};
pub use error::{CalibError, Result};
pub use info::{Kde1D, MiReport};
pub use metrics::{EvalConfig, EvalScheme, MetricReport};
pub use scalar::Scalar;
pub use scaling::Scaler;
pub use synth::{BinaryMixtureSpec, MulticlassSynthSpec};

pub type Binner64 = Binner<f64>;
pub type Binner32 = Binner<f32>;
pub type Scaler64 = Scaler<f64>;
pub type BinarySet64 = BinaryCalibrationSet<f64>;
pub type Predictions64 = PredictionMatrix<f64>;
pub type Scores64 = ScoreMatrix<f64>;
pub type Calibrator64 = Calibrator<f64>;

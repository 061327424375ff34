//! Core of the INDDE on-node damage detector.
//!
//! Everything here is `no_std` and only needs an allocator, so the same code
//! can run on a sensor node and in the desktop tooling:
//!
//! * [`signal`] cuts acceleration traces into tumbling windows and computes the
//!   seven time-domain statistics of each window.
//! * [`gauss`] fits a multivariate Gaussian to healthy-state feature vectors,
//!   evaluates log-densities through a Cholesky factor and applies the
//!   threshold rule.
//! * [`pipeline`] ties the two together into training and a streaming
//!   per-sample detector, and owns the model file format.
//! * [`evalkit`] scores verdicts against ground truth.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod evalkit;
pub mod gauss;
pub mod linalg;
mod modelfile;
pub mod pipeline;
pub mod signal;

pub use evalkit::{ConfusionMatrix, EvalReport};
pub use gauss::{GaussianModel, Label, TrainingMatrix, Verdict};
pub use pipeline::{DetectorState, TrainConfig};
pub use signal::{AccelTrace, FeatureVector, NodeId, WindowSpec};

/// Number of statistics in a [`FeatureVector`].
pub const FEATURE_COUNT: usize = 7;

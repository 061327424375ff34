//! Per-node training and streaming detection.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::gauss::{
    self, GaussError, GaussianModel, Label, Ridge, TrainingMatrix, Verdict, VerdictFlags,
};
use crate::signal::{self, AccelTrace, FeatureVector, NodeId, SignalError, WindowSpec};
use crate::FEATURE_COUNT;

pub use crate::modelfile::{load_model, save_model, ModelFileError, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Gauss(#[from] GaussError),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidSplit(f64),
    #[error("{windows} usable windows split into {fit} fit / {validation} validation; need {min_fit} fit and 1 validation")]
    TooFewWindows {
        windows: usize,
        fit: usize,
        validation: usize,
        min_fit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("sample is not finite")]
    NonFiniteSample,
    #[error("model has no calibrated threshold")]
    UncalibratedModel,
    #[error("model carries no window specification")]
    MissingWindow,
    #[error(transparent)]
    Gauss(#[from] GaussError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub window: WindowSpec,
    /// Leading share of healthy windows used for fitting; the rest calibrates the threshold.
    pub train_fraction: f64,
    pub ridge: Ridge,
    pub quantile: f64,
    pub margin_log: f64,
    pub min_train_windows: usize,
}

impl TrainConfig {
    pub fn new(window: WindowSpec) -> Self {
        Self {
            window,
            train_fraction: 0.75,
            ridge: Ridge::default(),
            quantile: gauss::DEFAULT_QUANTILE,
            margin_log: gauss::DEFAULT_MARGIN_LOG,
            min_train_windows: FEATURE_COUNT + 1,
        }
    }
}

/// Split sizes for `windows` usable windows: `(fit, validation)`.
pub fn split_counts(windows: usize, train_fraction: f64) -> (usize, usize) {
    let fit = libm::round(windows as f64 * train_fraction) as usize;
    let fit = fit.min(windows);
    (fit, windows - fit)
}

/// A calibrated model together with the bookkeeping of how it was built.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GaussianModel,
    pub fit_matrix: TrainingMatrix,
    pub validation_matrix: TrainingMatrix,
    /// Windows dropped because their variance or energy was zero.
    pub skipped_degenerate: usize,
    /// Trailing samples that did not fill a window.
    pub discarded_samples: usize,
}

impl Trained {
    pub fn fit_windows(&self) -> usize {
        self.fit_matrix.rows()
    }

    pub fn validation_windows(&self) -> usize {
        self.validation_matrix.rows()
    }
}

/// Segments a healthy trace, fits on the leading windows and calibrates the
/// threshold on the trailing ones. The split is chronological.
pub fn train(healthy: &AccelTrace, cfg: &TrainConfig) -> Result<Trained, TrainError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(TrainError::InvalidSplit(cfg.train_fraction));
    }
    let min_fit = cfg.min_train_windows.max(FEATURE_COUNT + 1);
    let (features, discarded_samples) = match signal::extract_features(healthy, &cfg.window) {
        Ok(v) => v,
        Err(SignalError::EmptyTrace { .. }) => {
            return Err(TrainError::TooFewWindows {
                windows: 0,
                fit: 0,
                validation: 0,
                min_fit,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let total = features.len();
    let usable: Vec<FeatureVector> = features.into_iter().filter_map(Result::ok).collect();
    let skipped_degenerate = total - usable.len();

    let (n_fit, n_val) = split_counts(usable.len(), cfg.train_fraction);
    if n_fit < min_fit || n_val == 0 {
        return Err(TrainError::TooFewWindows {
            windows: usable.len(),
            fit: n_fit,
            validation: n_val,
            min_fit,
        });
    }
    let fit_matrix = TrainingMatrix::from_features(&usable[..n_fit])?;
    let validation_matrix = TrainingMatrix::from_features(&usable[n_fit..])?;
    let model = gauss::fit(&fit_matrix, cfg.ridge)?
        .calibrate_threshold(&validation_matrix, cfg.quantile, cfg.margin_log)?
        .with_window(cfg.window);
    Ok(Trained {
        model,
        fit_matrix,
        validation_matrix,
        skipped_degenerate,
        discarded_samples,
    })
}

/// Streaming detector for one node: buffers samples and emits one verdict per
/// full window.
#[derive(Debug, Clone)]
pub struct DetectorState {
    model: Arc<GaussianModel>,
    node_id: NodeId,
    window_len: usize,
    buffer: Vec<f64>,
    windows_emitted: usize,
    ingested: u64,
}

impl DetectorState {
    pub fn new(model: Arc<GaussianModel>, node_id: NodeId) -> Result<Self, DetectError> {
        if !model.is_calibrated() {
            return Err(DetectError::UncalibratedModel);
        }
        let window_len = model.window().ok_or(DetectError::MissingWindow)?.samples();
        Ok(Self {
            model,
            node_id,
            window_len,
            buffer: Vec::with_capacity(window_len),
            windows_emitted: 0,
            ingested: 0,
        })
    }

    pub fn model(&self) -> &GaussianModel {
        &self.model
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn windows_emitted(&self) -> usize {
        self.windows_emitted
    }

    pub fn samples_ingested(&self) -> u64 {
        self.ingested
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Adds one sample. Returns a verdict when it completes a window.
    ///
    /// A window with zero variance or zero energy is reported as damaged with
    /// [`VerdictFlags::DEGENERATE`] and a log-density of negative infinity.
    pub fn ingest(&mut self, sample: f64) -> Result<Option<Verdict>, DetectError> {
        if !sample.is_finite() {
            return Err(DetectError::NonFiniteSample);
        }
        self.buffer.push(sample);
        self.ingested += 1;
        if self.buffer.len() < self.window_len {
            return Ok(None);
        }
        let window_index = self.windows_emitted;
        let verdict = match signal::compute_features(&self.buffer) {
            Ok(mut features) => {
                features.window_index = window_index;
                self.model.classify(self.node_id, &features)?
            }
            Err(SignalError::DegenerateWindow | SignalError::ZeroSignal) => Verdict {
                node_id: self.node_id,
                window_index,
                log_density: f64::NEG_INFINITY,
                label: Label::Damaged,
                flags: VerdictFlags::DEGENERATE,
            },
            // Finite samples of a full window cannot fail any other way.
            Err(_) => unreachable!("full window of finite samples"),
        };
        self.buffer.clear();
        self.windows_emitted += 1;
        Ok(Some(verdict))
    }

    /// Feeds every sample of `samples`, collecting the verdicts produced.
    pub fn ingest_all(&mut self, samples: &[f64]) -> Result<Vec<Verdict>, DetectError> {
        let mut out = Vec::with_capacity(samples.len() / self.window_len + 1);
        for &s in samples {
            if let Some(v) = self.ingest(s)? {
                out.push(v);
            }
        }
        Ok(out)
    }
}

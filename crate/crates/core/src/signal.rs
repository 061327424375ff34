//! Tumbling-window segmentation and time-domain window statistics.

use alloc::vec::Vec;
use core::fmt;
use core::slice::ChunksExact;

use crate::FEATURE_COUNT;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("sampling frequency must be positive and finite, got {0}")]
    InvalidFrequency(f64),
    #[error("window duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("window of {duration_s} s at {freq} Hz holds {samples} samples, need at least 2")]
    WindowTooShort {
        duration_s: f64,
        freq: f64,
        samples: usize,
    },
    #[error("trace is empty")]
    NoSamples,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("trace holds {got} samples, one window needs {needed}")]
    EmptyTrace { needed: usize, got: usize },
    #[error("trace sampled at {trace} Hz but window expects {window} Hz")]
    FrequencyMismatch { trace: f64, window: f64 },
    #[error("window has zero variance")]
    DegenerateWindow,
    #[error("window has zero mean square")]
    ZeroSignal,
}

/// Identifier of a sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn check_freq(freq: f64) -> Result<(), SignalError> {
    if freq.is_finite() && freq > 0.0 {
        Ok(())
    } else {
        Err(SignalError::InvalidFrequency(freq))
    }
}

/// A uniformly sampled acceleration signal from one node.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelTrace {
    samples: Vec<f64>,
    freq: f64,
    node_id: NodeId,
}

impl AccelTrace {
    pub fn new(samples: Vec<f64>, freq: f64, node_id: NodeId) -> Result<Self, SignalError> {
        check_freq(freq)?;
        if samples.is_empty() {
            return Err(SignalError::NoSamples);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            freq,
            node_id,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Sub-trace `[start, end)` of this trace, keeping node and frequency.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, SignalError> {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Self::new(self.samples[start..end].to_vec(), self.freq, self.node_id)
    }
}

/// Window length expressed in seconds and the frequency it was sized for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    duration_s: f64,
    freq: f64,
    samples: usize,
}

impl WindowSpec {
    pub fn new(duration_s: f64, freq: f64) -> Result<Self, SignalError> {
        check_freq(freq)?;
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(SignalError::InvalidDuration(duration_s));
        }
        let samples = libm::round(duration_s * freq) as usize;
        if samples < 2 {
            return Err(SignalError::WindowTooShort {
                duration_s,
                freq,
                samples,
            });
        }
        Ok(Self {
            duration_s,
            freq,
            samples,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    /// Samples per window (`r`).
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of whole windows in a section of `section_s` seconds.
    pub fn windows_in(&self, section_s: f64) -> usize {
        let k = libm::round(section_s * self.freq).max(0.0) as usize;
        k / self.samples
    }
}

/// Result of [`segment`]: the whole windows plus the size of the dropped tail.
#[derive(Debug, Clone)]
pub struct Segments<'a> {
    chunks: ChunksExact<'a, f64>,
    count: usize,
    discarded: usize,
}

impl<'a> Segments<'a> {
    pub fn count(&self) -> usize {
        self.count
    }

    /// Trailing samples that did not fill a window.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn windows(&self) -> ChunksExact<'a, f64> {
        self.chunks.clone()
    }
}

/// Splits a trace into contiguous non-overlapping windows of `spec.samples()`.
pub fn segment<'a>(trace: &'a AccelTrace, spec: &WindowSpec) -> Result<Segments<'a>, SignalError> {
    if trace.freq != spec.freq {
        return Err(SignalError::FrequencyMismatch {
            trace: trace.freq,
            window: spec.freq,
        });
    }
    let r = spec.samples;
    let k = trace.samples.len();
    if k < r {
        return Err(SignalError::EmptyTrace { needed: r, got: k });
    }
    let chunks = trace.samples.chunks_exact(r);
    Ok(Segments {
        discarded: chunks.remainder().len(),
        count: k / r,
        chunks,
    })
}

/// The seven statistics of one window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub mean: f64,
    pub mean_square: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub crest_factor: f64,
    pub window_index: usize,
}

impl FeatureVector {
    pub const NAMES: [&'static str; FEATURE_COUNT] = [
        "mean",
        "mean_square",
        "variance",
        "std_dev",
        "skewness",
        "kurtosis",
        "crest_factor",
    ];

    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.mean,
            self.mean_square,
            self.variance,
            self.std_dev,
            self.skewness,
            self.kurtosis,
            self.crest_factor,
        ]
    }

    pub fn from_array(values: [f64; FEATURE_COUNT], window_index: usize) -> Self {
        let [mean, mean_square, variance, std_dev, skewness, kurtosis, crest_factor] = values;
        Self {
            mean,
            mean_square,
            variance,
            std_dev,
            skewness,
            kurtosis,
            crest_factor,
            window_index,
        }
    }
}

/// Computes the window statistics in one pass with population normalization.
///
/// Power sums are accumulated around the first sample of the window, which
/// keeps the moment recombination well conditioned when the signal carries a
/// large offset. Kurtosis is the raw fourth standardized moment (3 for
/// Gaussian data). Crest factor uses the absolute peak over the RMS.
pub fn compute_features(window: &[f64]) -> Result<FeatureVector, SignalError> {
    let r = window.len();
    if r < 2 {
        return Err(SignalError::EmptyTrace { needed: 2, got: r });
    }
    let pivot = window[0];
    let (mut s1, mut s2, mut s3, mut s4) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut peak = 0.0_f64;
    for (index, &d) in window.iter().enumerate() {
        if !d.is_finite() {
            return Err(SignalError::NonFiniteSample { index });
        }
        let y = d - pivot;
        let y2 = y * y;
        s1 += y;
        s2 += y2;
        s3 += y2 * y;
        s4 += y2 * y2;
        peak = peak.max(libm::fabs(d));
    }
    let n = r as f64;
    let (a1, a2, a3, a4) = (s1 / n, s2 / n, s3 / n, s4 / n);
    let shift2 = a1 * a1;

    let mean = pivot + a1;
    let variance = (a2 - shift2).max(0.0);
    let mean_square = mean * mean + variance;
    if mean_square == 0.0 {
        return Err(SignalError::ZeroSignal);
    }
    if variance == 0.0 {
        return Err(SignalError::DegenerateWindow);
    }
    let m3 = a3 - 3.0 * a1 * a2 + 2.0 * shift2 * a1;
    let m4 = a4 - 4.0 * a1 * a3 + 6.0 * shift2 * a2 - 3.0 * shift2 * shift2;

    let std_dev = libm::sqrt(variance);
    let skewness = m3 / (variance * std_dev);
    // m4 >= m2^2 and peak >= rms hold exactly; clamp away rounding below the bound.
    let kurtosis = (m4 / (variance * variance)).max(1.0);
    let crest_factor = (peak / libm::sqrt(mean_square)).max(1.0);

    Ok(FeatureVector {
        mean,
        mean_square,
        variance,
        std_dev,
        skewness,
        kurtosis,
        crest_factor,
        window_index: 0,
    })
}

/// Features for every window of `trace`; per-window errors are kept in place.
pub fn extract_features(
    trace: &AccelTrace,
    spec: &WindowSpec,
) -> Result<(Vec<Result<FeatureVector, SignalError>>, usize), SignalError> {
    let segments = segment(trace, spec)?;
    let features = segments
        .windows()
        .enumerate()
        .map(|(i, w)| {
            compute_features(w).map(|mut f| {
                f.window_index = i;
                f
            })
        })
        .collect();
    Ok((features, segments.discarded()))
}

//! Seeded synthetic acceleration traces with a healthy-to-damaged switch.
//!
//! The healthy section is a stationary AR(1) Gaussian process with marginal
//! standard deviation `healthy_std`, optionally plus a sinusoidal load. After
//! the damage onset the process is scaled by `damage_std_factor` and each
//! innovation is, with probability `tail_weight`, inflated by `tail_scale`,
//! which raises kurtosis.

use indde_core::{AccelTrace, Label, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub healthy_std: f64,
    /// AR(1) coefficient, `|ar_coeff| < 1`.
    pub ar_coeff: f64,
    /// Seconds from trace start; `None` keeps the whole trace healthy.
    pub damage_onset_s: Option<f64>,
    pub damage_std_factor: f64,
    pub tail_weight: f64,
    pub tail_scale: f64,
    pub load_amplitude: f64,
    pub load_freq_hz: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            healthy_std: 1.0,
            ar_coeff: 0.5,
            damage_onset_s: None,
            damage_std_factor: 1.5,
            tail_weight: 0.0,
            tail_scale: 4.0,
            load_amplitude: 0.0,
            load_freq_hz: 0.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if !(self.healthy_std.is_finite() && self.healthy_std > 0.0) {
            return bad("healthy_std must be positive");
        }
        if !(self.ar_coeff.is_finite() && self.ar_coeff.abs() < 1.0) {
            return bad("ar_coeff must satisfy |ar_coeff| < 1");
        }
        if let Some(t) = self.damage_onset_s {
            if !(t.is_finite() && t >= 0.0) {
                return bad("damage_onset_s must be nonnegative");
            }
        }
        if !(self.damage_std_factor.is_finite() && self.damage_std_factor > 0.0) {
            return bad("damage_std_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.tail_weight) {
            return bad("tail_weight must lie in [0, 1)");
        }
        if !(self.tail_scale.is_finite() && self.tail_scale >= 1.0) {
            return bad("tail_scale must be at least 1");
        }
        if !(self.load_amplitude.is_finite() && self.load_amplitude >= 0.0) {
            return bad("load_amplitude must be nonnegative");
        }
        if !(self.load_freq_hz.is_finite() && self.load_freq_hz >= 0.0) {
            return bad("load_freq_hz must be nonnegative");
        }
        Ok(())
    }
}

/// Ground truth of a generated trace: healthy before `onset`, damaged from it on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSchedule {
    pub len: usize,
    pub onset: Option<usize>,
}

impl LabelSchedule {
    pub fn label_at(&self, sample: usize) -> Label {
        match self.onset {
            Some(o) if sample >= o => Label::Damaged,
            _ => Label::Healthy,
        }
    }

    /// A window takes the label of its last sample.
    pub fn window_label(&self, start: usize, len: usize) -> Label {
        self.label_at(start + len.saturating_sub(1))
    }

    /// `(start, end, label)` runs covering the trace.
    pub fn segments(&self) -> Vec<(usize, usize, Label)> {
        match self.onset {
            Some(o) if o < self.len => {
                let mut s = Vec::with_capacity(2);
                if o > 0 {
                    s.push((0, o, Label::Healthy));
                }
                s.push((o, self.len, Label::Damaged));
                s
            }
            _ => vec![(0, self.len, Label::Healthy)],
        }
    }
}

pub fn generate_trace(
    params: &SynthParams,
    duration_s: f64,
    freq: f64,
    seed: u64,
    node_id: NodeId,
) -> Result<(AccelTrace, LabelSchedule), SynthError> {
    params.validate()?;
    if !(freq.is_finite() && freq > 0.0) {
        return Err(SynthError::InvalidParams("freq must be positive".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SynthError::InvalidParams(
            "duration must be positive".into(),
        ));
    }
    let len = (duration_s * freq).round() as usize;
    if len == 0 {
        return Err(SynthError::InvalidParams("trace would be empty".into()));
    }
    let onset = params
        .damage_onset_s
        .map(|t| ((t * freq).round() as usize).min(len));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = params.ar_coeff;
    let gain = (1.0 - phi * phi).sqrt();
    let omega = 2.0 * std::f64::consts::PI * params.load_freq_hz / freq;
    let mut z: f64 = StandardNormal.sample(&mut rng);
    let mut samples = Vec::with_capacity(len);
    for i in 0..len {
        let damaged = onset.is_some_and(|o| i >= o);
        let mut e: f64 = StandardNormal.sample(&mut rng);
        if damaged && params.tail_weight > 0.0 && rng.random::<f64>() < params.tail_weight {
            e *= params.tail_scale;
        }
        if i > 0 {
            z = phi * z + gain * e;
        }
        let scale = if damaged {
            params.healthy_std * params.damage_std_factor
        } else {
            params.healthy_std
        };
        let load = params.load_amplitude * (omega * i as f64).sin();
        samples.push(scale * z + load);
    }
    let trace = AccelTrace::new(samples, freq, node_id)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    Ok((trace, LabelSchedule { len, onset }))
}

/// Mixes a scenario seed with a node id into an independent per-node seed.
pub fn node_seed(seed: u64, node: NodeId) -> u64 {
    // splitmix64 finalizer over the combined state
    let mut x = seed ^ (u64::from(node.0).wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

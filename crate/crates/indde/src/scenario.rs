//! TOML scenario files.
//!
//! ```toml
//! seed = 7
//! freq_hz = 100.0
//! window_s = 300.0
//!
//! [training]
//! train_fraction = 0.75
//! quantile = 0.99
//!
//! [synth]
//! damage_std_factor = 1.5
//!
//! [[nodes]]
//! id = 1
//! train_s = 86400
//! monitor_healthy_s = 21600
//! monitor_damaged_s = 86400
//!
//! [[nodes]]
//! id = 2
//! csv = "node2.csv"
//! train_s = 86400
//! monitor_healthy_s = 21600
//! monitor_damaged_s = 0
//! ```
//!
//! A node's own `[nodes.synth]` table overrides individual fields of the
//! top-level `[synth]` table. CSV paths are relative to the scenario file.

use std::path::{Path, PathBuf};

use indde_core::gauss::Ridge;
use indde_core::{NodeId, WindowSpec};
use serde::Deserialize;

use crate::simnet::{NodeSpec, Scenario, TraceSource, TrafficEncoding, TrainSettings};
use crate::synth::SynthParams;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    freq_hz: f64,
    window_s: f64,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    traffic: RawTraffic,
    #[serde(default)]
    synth: toml::Table,
    #[serde(default)]
    nodes: Vec<RawNode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    train_fraction: Option<f64>,
    quantile: Option<f64>,
    margin_log: Option<f64>,
    ridge_lambda: Option<f64>,
    ridge_relative: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    verdict_bytes: Option<u64>,
    sample_bytes: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u32,
    csv: Option<PathBuf>,
    train_s: f64,
    #[serde(default)]
    monitor_healthy_s: f64,
    #[serde(default)]
    monitor_damaged_s: f64,
    synth: Option<toml::Table>,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Parses scenario text; relative CSV paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.message().to_string()))?;
    let window = WindowSpec::new(raw.window_s, raw.freq_hz).map_err(|e| invalid(e.to_string()))?;

    let defaults = TrainSettings::default();
    let t = &raw.training;
    let ridge = match (t.ridge_lambda, t.ridge_relative) {
        (Some(_), Some(_)) => return Err(invalid("set ridge_lambda or ridge_relative, not both")),
        (Some(l), None) => Ridge::Fixed(l),
        (None, Some(f)) => Ridge::Relative(f),
        (None, None) => defaults.ridge,
    };
    let training = TrainSettings {
        train_fraction: t.train_fraction.unwrap_or(defaults.train_fraction),
        quantile: t.quantile.unwrap_or(defaults.quantile),
        margin_log: t.margin_log.unwrap_or(defaults.margin_log),
        ridge,
    };
    let enc = TrafficEncoding::default();
    let traffic = TrafficEncoding {
        verdict_bytes: raw.traffic.verdict_bytes.unwrap_or(enc.verdict_bytes),
        sample_bytes: raw.traffic.sample_bytes.unwrap_or(enc.sample_bytes),
    };

    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for n in raw.nodes {
        if nodes.iter().any(|s: &NodeSpec| s.id.0 == n.id) {
            return Err(invalid(format!("duplicate node id {}", n.id)));
        }
        for (name, v) in [
            ("train_s", n.train_s),
            ("monitor_healthy_s", n.monitor_healthy_s),
            ("monitor_damaged_s", n.monitor_damaged_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!(
                    "node {}: {name} must be nonnegative",
                    n.id
                )));
            }
        }
        let source = match n.csv {
            Some(path) => {
                if n.synth.is_some() {
                    return Err(invalid(format!(
                        "node {}: csv and synth are exclusive",
                        n.id
                    )));
                }
                TraceSource::Csv(base_dir.join(path))
            }
            None => {
                let mut table = raw.synth.clone();
                if let Some(over) = n.synth {
                    table.extend(over);
                }
                let params: SynthParams = table.try_into().map_err(|e: toml::de::Error| {
                    invalid(format!("node {}: {}", n.id, e.message()))
                })?;
                if params.damage_onset_s.is_some() {
                    return Err(invalid(format!(
                        "node {}: damage onset follows from the node sections",
                        n.id
                    )));
                }
                params
                    .validate()
                    .map_err(|e| invalid(format!("node {}: {e}", n.id)))?;
                TraceSource::Synthetic(params)
            }
        };
        nodes.push(NodeSpec {
            id: NodeId(n.id),
            source,
            train_s: n.train_s,
            monitor_healthy_s: n.monitor_healthy_s,
            monitor_damaged_s: n.monitor_damaged_s,
        });
    }
    Ok(Scenario {
        seed: raw.seed,
        window,
        training,
        traffic,
        nodes,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
}

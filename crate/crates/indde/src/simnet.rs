//! Deterministic replay of a multi-node deployment.
//!
//! Every node trains on its own healthy section, then runs a
//! [`DetectorState`] over its monitoring section and transmits one fixed-size
//! verdict message per window to the base station. Only data volume is
//! modeled: there is no loss, delay or energy accounting.
//!
//! The collector orders deliveries by `(window end sample, node id)`, so the
//! merged stream does not depend on how node work was scheduled.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use indde_core::evalkit::EvalReport;
use indde_core::gauss::{Ridge, VerdictFlags};
use indde_core::pipeline::{self, TrainConfig};
use indde_core::{AccelTrace, DetectorState, Label, NodeId, WindowSpec};
use rayon::prelude::*;

use crate::csvio;
use crate::synth::{self, SynthParams};

pub const VERDICT_MESSAGE_BYTES: usize = 16;
pub const RAW_SAMPLE_BYTES: u64 = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("trace: {0}")]
    Trace(String),
    #[error("training: {0}")]
    Train(#[from] pipeline::TrainError),
    #[error("detection: {0}")]
    Detect(#[from] pipeline::DetectError),
    #[error("malformed verdict message: {0}")]
    Message(&'static str),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// On-air verdict: node id (u32 LE), window index (u64 LE), label, flags,
/// two reserved zero bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerdictMessage {
    pub node_id: NodeId,
    pub window_index: u64,
    pub label: Label,
    pub flags: VerdictFlags,
}

impl VerdictMessage {
    pub fn encode(&self) -> [u8; VERDICT_MESSAGE_BYTES] {
        let mut b = [0u8; VERDICT_MESSAGE_BYTES];
        b[0..4].copy_from_slice(&self.node_id.0.to_le_bytes());
        b[4..12].copy_from_slice(&self.window_index.to_le_bytes());
        b[12] = match self.label {
            Label::Healthy => 0,
            Label::Damaged => 1,
        };
        b[13] = self.flags.0;
        b
    }

    pub fn decode(b: &[u8; VERDICT_MESSAGE_BYTES]) -> Result<Self, SimError> {
        let label = match b[12] {
            0 => Label::Healthy,
            1 => Label::Damaged,
            _ => return Err(SimError::Message("label byte")),
        };
        if b[14] != 0 || b[15] != 0 {
            return Err(SimError::Message("reserved bytes"));
        }
        Ok(Self {
            node_id: NodeId(u32::from_le_bytes(b[0..4].try_into().unwrap())),
            window_index: u64::from_le_bytes(b[4..12].try_into().unwrap()),
            label,
            flags: VerdictFlags(b[13]),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Synthetic(SynthParams),
    /// Recorded trace, sampled at the scenario frequency.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub source: TraceSource,
    /// Healthy section at the start of the trace used for training.
    pub train_s: f64,
    /// Monitoring starts healthy for this long ...
    pub monitor_healthy_s: f64,
    /// ... and is damaged for this long afterwards.
    pub monitor_damaged_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub train_fraction: f64,
    pub quantile: f64,
    pub margin_log: f64,
    pub ridge: Ridge,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            quantile: indde_core::gauss::DEFAULT_QUANTILE,
            margin_log: indde_core::gauss::DEFAULT_MARGIN_LOG,
            ridge: Ridge::default(),
        }
    }
}

/// Byte sizes used for the traffic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficEncoding {
    pub verdict_bytes: u64,
    pub sample_bytes: u64,
}

impl Default for TrafficEncoding {
    fn default() -> Self {
        Self {
            verdict_bytes: VERDICT_MESSAGE_BYTES as u64,
            sample_bytes: RAW_SAMPLE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub window: WindowSpec,
    pub training: TrainSettings,
    pub traffic: TrafficEncoding,
    pub nodes: Vec<NodeSpec>,
}

impl Scenario {
    fn samples(&self, seconds: f64) -> usize {
        (seconds * self.window.freq()).round().max(0.0) as usize
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.window);
        cfg.train_fraction = self.training.train_fraction;
        cfg.quantile = self.training.quantile;
        cfg.margin_log = self.training.margin_log;
        cfg.ridge = self.training.ridge;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrafficLedger {
    pub node_id: NodeId,
    pub window_samples: u64,
    pub raw_samples_monitored: u64,
    pub verdict_messages_sent: u64,
    pub centralized_equivalent_samples: u64,
    pub verdict_bytes: u64,
    pub centralized_bytes: u64,
}

impl TrafficLedger {
    /// Raw samples a centralized design would ship per verdict message.
    pub fn sample_reduction(&self) -> Option<f64> {
        (self.verdict_messages_sent > 0)
            .then(|| self.centralized_equivalent_samples as f64 / self.verdict_messages_sent as f64)
    }
}

/// A verdict as stored at the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectedVerdict {
    pub node_id: NodeId,
    pub window_index: usize,
    pub window_end_s: f64,
    /// Node-local log density; not part of the transmitted message.
    pub log_density: f64,
    pub label: Label,
    pub flags: VerdictFlags,
    pub truth: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTraining {
    pub node_id: NodeId,
    pub fit_windows: usize,
    pub validation_windows: usize,
    pub skipped_degenerate: usize,
    pub epsilon_log: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFailure {
    pub node_id: NodeId,
    pub error: SimError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub verdicts: Vec<CollectedVerdict>,
    pub ledger: Vec<TrafficLedger>,
    pub training: Vec<NodeTraining>,
    pub failures: Vec<NodeFailure>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads for node execution; 0 uses the rayon default.
    pub threads: usize,
}

struct NodeRun {
    training: NodeTraining,
    ledger: TrafficLedger,
    monitor_offset: usize,
    healthy_samples: usize,
    wire: Vec<[u8; VERDICT_MESSAGE_BYTES]>,
    log_densities: Vec<f64>,
}

fn load_trace(s: &Scenario, node: &NodeSpec) -> Result<AccelTrace, SimError> {
    match &node.source {
        TraceSource::Synthetic(params) => {
            let total_s = node.train_s + node.monitor_healthy_s + node.monitor_damaged_s;
            let mut params = params.clone();
            params.damage_onset_s =
                (node.monitor_damaged_s > 0.0).then_some(node.train_s + node.monitor_healthy_s);
            let seed = synth::node_seed(s.seed, node.id);
            synth::generate_trace(&params, total_s, s.window.freq(), seed, node.id)
                .map(|(trace, _)| trace)
                .map_err(|e| SimError::Trace(e.to_string()))
        }
        TraceSource::Csv(path) => csvio::load_csv(path, Some(s.window.freq()), node.id)
            .map_err(|e| SimError::Trace(e.to_string())),
    }
}

fn run_node(s: &Scenario, node: &NodeSpec) -> Result<NodeRun, SimError> {
    let trace = load_trace(s, node)?;
    let train_len = s.samples(node.train_s);
    if trace.len() < train_len {
        return Err(SimError::Trace(format!(
            "trace has {} samples, training section needs {train_len}",
            trace.len()
        )));
    }
    let healthy = trace
        .slice(0, train_len)
        .map_err(|e| SimError::Trace(e.to_string()))?;
    let trained = pipeline::train(&healthy, &s.train_config())?;
    let training = NodeTraining {
        node_id: node.id,
        fit_windows: trained.fit_windows(),
        validation_windows: trained.validation_windows(),
        skipped_degenerate: trained.skipped_degenerate,
        epsilon_log: trained.model.epsilon_log().unwrap_or(f64::NAN),
    };

    let monitor_len = s.samples(node.monitor_healthy_s + node.monitor_damaged_s);
    let monitor_end = (train_len + monitor_len).min(trace.len());
    let monitor = &trace.samples()[train_len..monitor_end];

    let mut detector = DetectorState::new(Arc::new(trained.model), node.id)?;
    let mut wire = Vec::new();
    let mut log_densities = Vec::new();
    for &sample in monitor {
        if let Some(v) = detector.ingest(sample)? {
            let msg = VerdictMessage {
                node_id: v.node_id,
                window_index: v.window_index as u64,
                label: v.label,
                flags: v.flags,
            };
            wire.push(msg.encode());
            log_densities.push(v.log_density);
        }
    }
    let raw = monitor.len() as u64;
    let sent = wire.len() as u64;
    let ledger = TrafficLedger {
        node_id: node.id,
        window_samples: s.window.samples() as u64,
        raw_samples_monitored: raw,
        verdict_messages_sent: sent,
        centralized_equivalent_samples: raw,
        verdict_bytes: sent * s.traffic.verdict_bytes,
        centralized_bytes: raw * s.traffic.sample_bytes,
    };
    Ok(NodeRun {
        training,
        ledger,
        monitor_offset: train_len,
        healthy_samples: s.samples(node.monitor_healthy_s),
        wire,
        log_densities,
    })
}

/// Base-station sink; merges deliveries in `(end sample, node)` order.
#[derive(Debug, Default)]
pub struct Collector {
    inbox: BTreeMap<(u64, NodeId), CollectedVerdict>,
}

impl Collector {
    pub fn deliver(&mut self, end_sample: u64, verdict: CollectedVerdict) {
        self.inbox.insert((end_sample, verdict.node_id), verdict);
    }

    pub fn len(&self) -> usize {
        self.inbox.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inbox.is_empty()
    }

    pub fn into_verdicts(self) -> Vec<CollectedVerdict> {
        self.inbox.into_values().collect()
    }
}

pub fn run_scenario(s: &Scenario, opts: RunOptions) -> Result<SimOutcome, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let runs: Vec<(NodeId, Result<NodeRun, SimError>)> =
        pool.install(|| s.nodes.par_iter().map(|n| (n.id, run_node(s, n))).collect());

    let r = s.window.samples();
    let freq = s.window.freq();
    let mut collector = Collector::default();
    let mut ledger = Vec::new();
    let mut training = Vec::new();
    let mut failures = Vec::new();
    for (node_id, run) in runs {
        let run = match run {
            Ok(run) => run,
            Err(error) => {
                failures.push(NodeFailure { node_id, error });
                continue;
            }
        };
        for (bytes, &log_density) in run.wire.iter().zip(&run.log_densities) {
            let msg = VerdictMessage::decode(bytes)?;
            let idx = msg.window_index as usize;
            let end_in_monitor = (idx + 1) * r;
            let truth = if end_in_monitor > run.healthy_samples {
                Label::Damaged
            } else {
                Label::Healthy
            };
            let end_sample = (run.monitor_offset + end_in_monitor) as u64;
            collector.deliver(
                end_sample,
                CollectedVerdict {
                    node_id: msg.node_id,
                    window_index: idx,
                    window_end_s: end_sample as f64 / freq,
                    log_density,
                    label: msg.label,
                    flags: msg.flags,
                    truth,
                },
            );
        }
        ledger.push(run.ledger);
        training.push(run.training);
    }
    let verdicts = collector.into_verdicts();
    let mut report = EvalReport::from_pairs(verdicts.iter().map(|v| (v.node_id, v.label, v.truth)));
    // nodes that ran but produced no windows still get a row
    for l in &ledger {
        if !report.per_node.iter().any(|n| n.node_id == l.node_id) {
            report.per_node.push(indde_core::evalkit::NodeReport {
                node_id: l.node_id,
                confusion: Default::default(),
                metrics: None,
            });
        }
    }
    report.per_node.sort_by_key(|n| n.node_id);
    Ok(SimOutcome {
        verdicts,
        ledger,
        training,
        failures,
        report,
    })
}

//! Command-line driver.
//!
//! Exit codes: 0 success, 1 error, 2 `detect` saw at least one Damaged
//! window. Errors print one line on stderr: `error\t<Kind>\t<message>`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use indde_core::evalkit::{self, EvalReport};
use indde_core::gauss::{GaussError, Ridge};
use indde_core::pipeline::{self, DetectError, ModelFileError, TrainConfig, TrainError};
use indde_core::signal::SignalError;
use indde_core::{DetectorState, FeatureVector, Label, NodeId, WindowSpec};

use crate::csvio::{self, CsvError};
use crate::scenario::{self, ScenarioError};
use crate::simnet::{self, RunOptions, SimError};
use crate::synth::{self, SynthParams};
use crate::textfmt::{self, fmt_g9, TableError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DAMAGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "indde",
    version,
    about = "In-network damage detection on vibration traces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit and calibrate a model on a healthy trace.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Sampling frequency; overrides a `freq_hz` comment in the CSV.
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, default_value_t = 300.0)]
        window_sec: f64,
        /// Leading share of windows used for fitting.
        #[arg(long, default_value_t = 0.75)]
        split: f64,
        #[arg(long, default_value_t = indde_core::gauss::DEFAULT_QUANTILE)]
        quantile: f64,
        #[arg(long, default_value_t = indde_core::gauss::DEFAULT_MARGIN_LOG)]
        margin_log: f64,
        /// Absolute ridge added to the covariance diagonal. Without it the
        /// ridge is 1e-8 times the mean diagonal.
        #[arg(long)]
        ridge: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-feature summaries of the fit windows.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Classify every full window of a trace.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Run a multi-node scenario and write its outputs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads; 0 picks one per core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Score a verdict table against a truth table.
    Eval {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Generate a synthetic trace and its label schedule.
    Synth {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a model file in readable form.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    /// The stderr line, without trailing newline.
    pub fn line(&self) -> String {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        format!("error\t{}\t{}", clean(&self.kind), clean(&self.message))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("Io", format!("{}: {e}", path.display()))
}

fn signal_kind(e: &SignalError) -> &'static str {
    match e {
        SignalError::InvalidFrequency(_) => "InvalidFrequency",
        SignalError::InvalidDuration(_) => "InvalidDuration",
        SignalError::WindowTooShort { .. } => "WindowTooShort",
        SignalError::NoSamples => "NoSamples",
        SignalError::NonFiniteSample { .. } => "NonFiniteSample",
        SignalError::EmptyTrace { .. } => "EmptyTrace",
        SignalError::FrequencyMismatch { .. } => "FrequencyMismatch",
        SignalError::DegenerateWindow => "DegenerateWindow",
        SignalError::ZeroSignal => "ZeroSignal",
    }
}

fn gauss_kind(e: &GaussError) -> &'static str {
    match e {
        GaussError::InsufficientSamples { .. } => "InsufficientSamples",
        GaussError::DimensionMismatch { .. } => "DimensionMismatch",
        GaussError::NonFiniteInput => "NonFiniteInput",
        GaussError::SingularCovariance { .. } => "SingularCovariance",
        GaussError::InvalidRidge(_) => "InvalidRidge",
        GaussError::EmptyValidation => "EmptyValidation",
        GaussError::InvalidQuantile(_) => "InvalidQuantile",
        GaussError::InvalidMargin(_) => "InvalidMargin",
        GaussError::UncalibratedModel => "UncalibratedModel",
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        let kind = match &e {
            CsvError::Io { .. } => "Io",
            CsvError::ParseError { .. } => "ParseError",
            CsvError::NonFiniteValue { .. } => "NonFiniteValue",
            CsvError::MissingFrequency => "MissingFrequency",
            CsvError::InvalidFrequency(_) => "InvalidFrequency",
            CsvError::NoSamples => "NoSamples",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        let kind = match &e {
            ModelFileError::VersionMismatch { .. } => "VersionMismatch",
            ModelFileError::CorruptModel(_) => "CorruptModel",
            ModelFileError::InvalidModel(g) => gauss_kind(g),
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        Self::new(signal_kind(&e), e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Signal(s) => signal_kind(s),
            TrainError::Gauss(g) => gauss_kind(g),
            TrainError::InvalidSplit(_) => "InvalidSplit",
            TrainError::TooFewWindows { .. } => "TooFewWindows",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        let kind = match &e {
            DetectError::NonFiniteSample => "NonFiniteSample",
            DetectError::UncalibratedModel => "UncalibratedModel",
            DetectError::MissingWindow => "MissingWindow",
            DetectError::Gauss(g) => gauss_kind(g),
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let kind = match &e {
            ScenarioError::Io { .. } => "Io",
            ScenarioError::Syntax(_) => "ScenarioSyntax",
            ScenarioError::Invalid(_) => "InvalidScenario",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::new("Simulation", e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        let kind = match &e {
            TableError::Parse { .. } => "ParseError",
            TableError::MissingColumn(_) => "MissingColumn",
        };
        Self::new(kind, e.to_string())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::new("Io", format!("stdout: {e}")))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<i32, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                emit(out, &e.to_string())?;
                return Ok(EXIT_OK);
            }
            let first = e.to_string();
            let first = first
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            return Err(CliError::new("Usage", first));
        }
    };
    execute(cli.command, out)
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Train {
            input,
            freq,
            window_sec,
            split,
            quantile,
            margin_log,
            ridge,
            out: model_path,
            diagnostics,
        } => {
            let trace = csvio::load_csv(&input, freq, NodeId(0))?;
            let window = WindowSpec::new(window_sec, trace.freq())?;
            let mut cfg = TrainConfig::new(window);
            cfg.train_fraction = split;
            cfg.quantile = quantile;
            cfg.margin_log = margin_log;
            if let Some(l) = ridge {
                cfg.ridge = Ridge::Fixed(l);
            }
            let trained = pipeline::train(&trace, &cfg)?;
            write_file(&model_path, pipeline::save_model(&trained.model))?;
            if let Some(path) = diagnostics {
                let summary = evalkit::export_feature_diagnostics(&trained.fit_matrix)
                    .map_err(|e| CliError::new("Diagnostics", e.to_string()))?;
                write_file(&path, textfmt::diagnostics_tsv(&summary))?;
            }
            let mut s = String::new();
            let _ = writeln!(s, "samples\t{}", trace.len());
            let _ = writeln!(s, "window_samples\t{}", window.samples());
            let _ = writeln!(s, "fit_windows\t{}", trained.fit_windows());
            let _ = writeln!(s, "validation_windows\t{}", trained.validation_windows());
            let _ = writeln!(s, "skipped_degenerate\t{}", trained.skipped_degenerate);
            let _ = writeln!(s, "discarded_samples\t{}", trained.discarded_samples);
            let eps = trained.model.epsilon_log().unwrap_or(f64::NAN);
            let _ = writeln!(s, "epsilon_log\t{}", fmt_g9(eps));
            emit(out, &s)?;
            Ok(EXIT_OK)
        }

        Command::Detect { model, input, freq } => {
            let model = pipeline::load_model(&read_file(&model)?)?;
            let model_freq = model
                .window()
                .map(WindowSpec::freq)
                .ok_or_else(|| CliError::new("CorruptModel", "model has no window spec"))?;
            let mut trace = csvio::load_csv(&input, freq, NodeId(0));
            if let Err(CsvError::MissingFrequency) = trace {
                trace = csvio::load_csv(&input, Some(model_freq), NodeId(0));
            }
            let trace = trace?;
            if trace.freq() != model_freq {
                return Err(SignalError::FrequencyMismatch {
                    trace: trace.freq(),
                    window: model_freq,
                }
                .into());
            }
            let mut det = DetectorState::new(Arc::new(model), NodeId(0))?;
            let mut s = String::from(textfmt::DETECT_HEADER);
            s.push('\n');
            let mut damaged = false;
            for &x in trace.samples() {
                if let Some(v) = det.ingest(x)? {
                    damaged |= v.label == Label::Damaged;
                    s.push_str(&textfmt::detect_line(&v));
                    s.push('\n');
                }
            }
            emit(out, &s)?;
            Ok(if damaged { EXIT_DAMAGED } else { EXIT_OK })
        }

        Command::Simulate {
            scenario,
            out_dir,
            threads,
        } => {
            let sc = scenario::load_scenario(&scenario)?;
            let outcome = simnet::run_scenario(&sc, RunOptions { threads })?;
            std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
            write_file(
                &out_dir.join("verdicts.tsv"),
                textfmt::verdicts_tsv(&outcome.verdicts),
            )?;
            write_file(
                &out_dir.join("truth.tsv"),
                textfmt::truth_tsv(&outcome.verdicts),
            )?;
            write_file(
                &out_dir.join("ledger.tsv"),
                textfmt::ledger_tsv(&outcome.ledger),
            )?;
            let report = textfmt::report_tsv(&outcome.report);
            write_file(&out_dir.join("report.tsv"), &report)?;
            write_file(
                &out_dir.join("training.tsv"),
                training_tsv(&outcome.training),
            )?;
            write_file(
                &out_dir.join("failures.tsv"),
                failures_tsv(&outcome.failures),
            )?;
            let mut s = String::new();
            let _ = writeln!(s, "nodes\t{}", sc.nodes.len());
            let _ = writeln!(s, "failed_nodes\t{}", outcome.failures.len());
            let _ = writeln!(s, "verdicts\t{}", outcome.verdicts.len());
            s.push_str(&report);
            emit(out, &s)?;
            Ok(EXIT_OK)
        }

        Command::Eval { verdicts, truth } => {
            let detected = textfmt::read_labels(&read_text(&verdicts)?)?;
            let truth = textfmt::read_labels(&read_text(&truth)?)?;
            if detected.len() != truth.len() || detected.keys().ne(truth.keys()) {
                return Err(CliError::new(
                    "LengthMismatch",
                    format!(
                        "verdict table has {} windows, truth table {}, or their keys differ",
                        detected.len(),
                        truth.len()
                    ),
                ));
            }
            let report = EvalReport::from_pairs(
                detected
                    .iter()
                    .zip(truth.values())
                    .map(|((&(node, _), &d), &t)| (node, d, t)),
            );
            emit(out, &textfmt::report_tsv(&report))?;
            Ok(EXIT_OK)
        }

        Command::Synth {
            params,
            seed,
            out: csv_path,
        } => {
            let spec = parse_synth_file(&read_text(&params)?)?;
            let (trace, schedule) = synth::generate_trace(
                &spec.params,
                spec.duration_s,
                spec.freq_hz,
                seed,
                spec.node_id,
            )
            .map_err(|e| CliError::new("InvalidParams", e.to_string()))?;
            write_file(&csv_path, csvio::trace_csv(&trace))?;
            let sidecar = labels_path(&csv_path);
            write_file(&sidecar, csvio::schedule_tsv(&schedule, trace.freq()))?;
            let mut s = String::new();
            let _ = writeln!(s, "samples\t{}", trace.len());
            let _ = writeln!(s, "labels\t{}", sidecar.display());
            emit(out, &s)?;
            Ok(EXIT_OK)
        }

        Command::Inspect { model } => {
            let model = pipeline::load_model(&read_file(&model)?)?;
            emit(out, &inspect_text(&model))?;
            Ok(EXIT_OK)
        }
    }
}

/// `trace.csv` -> `trace.labels.tsv`.
pub fn labels_path(csv: &Path) -> PathBuf {
    csv.with_extension("labels.tsv")
}

fn training_tsv(rows: &[simnet::NodeTraining]) -> String {
    let mut s =
        String::from("node_id\tfit_windows\tvalidation_windows\tskipped_degenerate\tepsilon_log\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.node_id,
            r.fit_windows,
            r.validation_windows,
            r.skipped_degenerate,
            fmt_g9(r.epsilon_log)
        );
    }
    s
}

fn failures_tsv(rows: &[simnet::NodeFailure]) -> String {
    let mut s = String::from("node_id\terror\n");
    for r in rows {
        let msg = r.error.to_string().replace(['\t', '\n'], " ");
        let _ = writeln!(s, "{}\t{msg}", r.node_id);
    }
    s
}

pub fn inspect_text(model: &indde_core::GaussianModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format_version\t{}", pipeline::MODEL_FORMAT_VERSION);
    let _ = writeln!(s, "dim\t{}", model.dim());
    match model.window() {
        Some(w) => {
            let _ = writeln!(s, "window_duration_s\t{}", fmt_g9(w.duration_s()));
            let _ = writeln!(s, "window_freq_hz\t{}", fmt_g9(w.freq()));
            let _ = writeln!(s, "window_samples\t{}", w.samples());
        }
        None => s.push_str("window_duration_s\tnone\nwindow_freq_hz\tnone\nwindow_samples\tnone\n"),
    }
    let _ = writeln!(s, "fit_rows\t{}", model.fit_rows());
    let _ = writeln!(s, "validation_rows\t{}", model.validation_rows());
    let _ = writeln!(s, "ridge_lambda\t{}", fmt_g9(model.ridge_lambda()));
    let _ = writeln!(s, "log_det\t{}", fmt_g9(model.log_det()));
    match model.epsilon_log() {
        Some(e) => {
            let _ = writeln!(s, "epsilon_log\t{}", fmt_g9(e));
        }
        None => s.push_str("epsilon_log\tnone\n"),
    }
    s.push_str("\nfeature\tomega\tsigma_diag\n");
    let diag = model.sigma_diagonal();
    for (i, (o, d)) in model.omega().iter().zip(&diag).enumerate() {
        let name = if model.dim() == indde_core::FEATURE_COUNT {
            FeatureVector::NAMES[i].to_string()
        } else {
            format!("x{i}")
        };
        let _ = writeln!(s, "{name}\t{}\t{}", fmt_g9(*o), fmt_g9(*d));
    }
    s
}

/// Generator parameters plus trace geometry, as read by `synth --params`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFile {
    pub duration_s: f64,
    pub freq_hz: f64,
    pub node_id: NodeId,
    pub params: SynthParams,
}

pub fn parse_synth_file(text: &str) -> Result<SynthFile, CliError> {
    let bad = |m: String| CliError::new("InvalidParams", m);
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| bad(e.message().into()))?;
    let mut number = |key: &str| -> Result<Option<f64>, CliError> {
        match table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(bad(format!("{key} must be a number"))),
        }
    };
    let duration_s = number("duration_s")?.ok_or_else(|| bad("missing duration_s".into()))?;
    let freq_hz = number("freq_hz")?.ok_or_else(|| bad("missing freq_hz".into()))?;
    let node = number("node_id")?.unwrap_or(0.0);
    if !(node >= 0.0 && node <= u32::MAX as f64 && node.fract() == 0.0) {
        return Err(bad("node_id must be a nonnegative integer".into()));
    }
    let params: SynthParams = table
        .try_into()
        .map_err(|e: toml::de::Error| bad(e.message().into()))?;
    Ok(SynthFile {
        duration_s,
        freq_hz,
        node_id: NodeId(node as u32),
        params,
    })
}

/// Binary entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os(), &mut lock) {
        Ok(code) => {
            let _ = lock.flush();
            code
        }
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{}", e.line());
            EXIT_ERROR
        }
    }
}

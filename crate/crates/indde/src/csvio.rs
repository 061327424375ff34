//! Acceleration traces as CSV.
//!
//! ```text
//! # freq_hz = 100
//! time_s,accel
//! 0,0.0132
//! 0.01,-0.2201
//! ```
//!
//! One acceleration column, optionally preceded by a timestamp column. Lines
//! starting with `#` are comments; a `freq_hz` comment declares the sampling
//! frequency, which a command-line value overrides. The first non-comment line
//! is a header unless every field in it is numeric.

use std::fmt::Write as _;
use std::path::Path;

use indde_core::{AccelTrace, NodeId};

use crate::synth::LabelSchedule;
use crate::textfmt::fmt_g9;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("line {line}: value is not finite")]
    NonFiniteValue { line: usize },
    #[error("no sampling frequency: add a `# freq_hz = <hz>` comment or pass a frequency")]
    MissingFrequency,
    #[error("invalid sampling frequency {0}")]
    InvalidFrequency(f64),
    #[error("file holds no samples")]
    NoSamples,
}

impl CsvError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CsvError::ParseError { line, .. } | CsvError::NonFiniteValue { line } => Some(*line),
            _ => None,
        }
    }
}

fn freq_comment(comment: &str) -> Option<&str> {
    let rest = comment.trim_start_matches('#').trim();
    let rest = rest.strip_prefix("freq_hz")?;
    Some(rest.trim_start_matches([' ', '=', ':', '\t']).trim())
}

/// Parses CSV text into a trace. `freq_override` wins over a `freq_hz` comment.
pub fn parse_csv(
    text: &str,
    freq_override: Option<f64>,
    node_id: NodeId,
) -> Result<AccelTrace, CsvError> {
    let mut declared = None;
    let mut samples = Vec::new();
    let mut columns: Option<usize> = None;
    let mut seen_first = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = freq_comment(line) {
                let hz = v.parse::<f64>().map_err(|_| CsvError::ParseError {
                    line: line_no,
                    msg: format!("bad freq_hz value {v:?}"),
                })?;
                declared = Some(hz);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Result<f64, _>> = fields.iter().map(|f| f.parse::<f64>()).collect();
        if !seen_first {
            seen_first = true;
            if parsed.iter().any(Result::is_err) {
                // header row
                columns = Some(fields.len());
                continue;
            }
        }
        let expected = *columns.get_or_insert(fields.len());
        if fields.len() != expected || !(1..=2).contains(&fields.len()) {
            return Err(CsvError::ParseError {
                line: line_no,
                msg: format!(
                    "expected {} column(s), found {}",
                    expected.min(2),
                    fields.len()
                ),
            });
        }
        let value = match parsed.last() {
            Some(Ok(v)) => *v,
            _ => {
                return Err(CsvError::ParseError {
                    line: line_no,
                    msg: format!("not a number: {:?}", fields.last().unwrap_or(&"")),
                })
            }
        };
        if let Some(Err(_)) = parsed.first().filter(|_| fields.len() == 2) {
            return Err(CsvError::ParseError {
                line: line_no,
                msg: format!("bad timestamp {:?}", fields[0]),
            });
        }
        if !value.is_finite() {
            return Err(CsvError::NonFiniteValue { line: line_no });
        }
        samples.push(value);
    }
    let freq = freq_override
        .or(declared)
        .ok_or(CsvError::MissingFrequency)?;
    if !(freq.is_finite() && freq > 0.0) {
        return Err(CsvError::InvalidFrequency(freq));
    }
    if samples.is_empty() {
        return Err(CsvError::NoSamples);
    }
    AccelTrace::new(samples, freq, node_id).map_err(|_| CsvError::NoSamples)
}

pub fn load_csv(
    path: &Path,
    freq_override: Option<f64>,
    node_id: NodeId,
) -> Result<AccelTrace, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, freq_override, node_id)
}

pub fn trace_csv(trace: &AccelTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 24);
    let _ = writeln!(out, "# freq_hz = {}", fmt_g9(trace.freq()));
    let _ = writeln!(out, "# node_id = {}", trace.node_id());
    out.push_str("time_s,accel\n");
    for (i, s) in trace.samples().iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_g9(i as f64 / trace.freq()), fmt_g9(*s));
    }
    out
}

/// Sidecar listing the labeled runs of a generated trace.
pub fn schedule_tsv(schedule: &LabelSchedule, freq: f64) -> String {
    let mut out = String::from("start_sample\tend_sample\tstart_s\tend_s\tlabel\n");
    for (a, b, label) in schedule.segments() {
        let _ = writeln!(
            out,
            "{a}\t{b}\t{}\t{}\t{label}",
            fmt_g9(a as f64 / freq),
            fmt_g9(b as f64 / freq)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_declared_frequency_and_timestamps() {
        let text = "# freq_hz = 100\ntime_s,accel\n0,1.5\n0.01,-2\n\n# trailing comment\n0.02,3\n";
        let t = parse_csv(text, None, NodeId(2)).unwrap();
        assert_eq!(t.samples(), &[1.5, -2.0, 3.0]);
        assert_eq!(t.freq(), 100.0);
        assert_eq!(t.node_id(), NodeId(2));
        let t = parse_csv(text, Some(50.0), NodeId(2)).unwrap();
        assert_eq!(t.freq(), 50.0);
    }

    #[test]
    fn headerless_single_column() {
        let t = parse_csv("# freq_hz: 10\n1\n2\n3\n", None, NodeId(0)).unwrap();
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn bad_row_reports_line() {
        let mut text = String::from("# freq_hz = 100\naccel\n");
        for i in 0..14 {
            text.push_str(&format!("{i}\n"));
        }
        text.push_str("abc\n");
        let err = parse_csv(&text, None, NodeId(0)).unwrap_err();
        assert_eq!(err.line(), Some(17));
        assert!(matches!(err, CsvError::ParseError { line: 17, .. }));
    }

    #[test]
    fn non_finite_and_missing_frequency() {
        let err = parse_csv("# freq_hz = 1\naccel\n1\nnan\n", None, NodeId(0)).unwrap_err();
        assert!(matches!(err, CsvError::NonFiniteValue { line: 4 }));
        let err = parse_csv("accel\n1\n2\n", None, NodeId(0)).unwrap_err();
        assert!(matches!(err, CsvError::MissingFrequency));
        let err = parse_csv("# freq_hz = 1\naccel\n", None, NodeId(0)).unwrap_err();
        assert!(matches!(err, CsvError::NoSamples));
        let err = parse_csv("# freq_hz = 1\nt,a\n1,2\n3\n", None, NodeId(0)).unwrap_err();
        assert!(matches!(err, CsvError::ParseError { line: 4, .. }));
    }

    #[test]
    fn written_trace_reads_back() {
        let t = AccelTrace::new(vec![0.125, -1.5, 2.0], 200.0, NodeId(5)).unwrap();
        let back = parse_csv(&trace_csv(&t), None, NodeId(5)).unwrap();
        assert_eq!(back, t);
    }
}

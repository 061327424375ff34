//! Tab-separated text formats shared by the CLI and the simulator.
//!
//! Every float is printed with 9 significant digits (`%.9g` style) so that
//! outputs diff cleanly across runs. Ratios that are undefined print as
//! `undefined`.

use std::collections::BTreeMap;
use std::fmt::Write;

use indde_core::evalkit::{EvalReport, FeatureSummary, Metrics};
use indde_core::{ConfusionMatrix, Label, NodeId};

use crate::simnet::{CollectedVerdict, TrafficLedger};

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    const SIG: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIG).contains(&exp) {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), fmt_g9)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing column {0}")]
    MissingColumn(&'static str),
}

fn flags_str(v: &CollectedVerdict) -> &'static str {
    if v.flags.is_degenerate() {
        "degenerate"
    } else {
        "-"
    }
}

pub const VERDICT_HEADER: &str = "node_id\twindow_index\twindow_end_s\tlog_density\tlabel\tflags";
pub const DETECT_HEADER: &str = "window_index\tlog_density\tlabel\tflags";

pub fn verdicts_tsv(verdicts: &[CollectedVerdict]) -> String {
    let mut out = String::from(VERDICT_HEADER);
    out.push('\n');
    for v in verdicts {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            v.node_id,
            v.window_index,
            fmt_g9(v.window_end_s),
            fmt_g9(v.log_density),
            v.label,
            flags_str(v)
        );
    }
    out
}

pub fn detect_line(v: &indde_core::Verdict) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        v.window_index,
        fmt_g9(v.log_density),
        v.label,
        if v.flags.is_degenerate() {
            "degenerate"
        } else {
            "-"
        }
    )
}

pub fn truth_tsv(verdicts: &[CollectedVerdict]) -> String {
    let mut out = String::from("node_id\twindow_index\tlabel\n");
    for v in verdicts {
        let _ = writeln!(out, "{}\t{}\t{}", v.node_id, v.window_index, v.truth);
    }
    out
}

/// `(node, window_index) -> label` read from a verdict or truth table.
///
/// The `label` and `window_index` columns are located by header name; a
/// missing `node_id` column maps every row to node 0.
pub fn read_labels(text: &str) -> Result<BTreeMap<(NodeId, usize), Label>, TableError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or(TableError::MissingColumn("label"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name| cols.iter().position(|c| *c == name);
    let label_col = find("label").ok_or(TableError::MissingColumn("label"))?;
    let index_col = find("window_index").ok_or(TableError::MissingColumn("window_index"))?;
    let node_col = find("node_id");
    let mut out = BTreeMap::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |msg: String| TableError::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |c: usize| {
            fields
                .get(c)
                .map(|s| s.trim())
                .ok_or_else(|| err(format!("expected at least {} fields", c + 1)))
        };
        let node = match node_col {
            Some(c) => NodeId(get(c)?.parse().map_err(|_| err("bad node_id".into()))?),
            None => NodeId(0),
        };
        let index: usize = get(index_col)?
            .parse()
            .map_err(|_| err("bad window_index".into()))?;
        let label = Label::parse(get(label_col)?).ok_or_else(|| err("bad label".into()))?;
        if out.insert((node, index), label).is_some() {
            return Err(err(format!("duplicate window {node}/{index}")));
        }
    }
    Ok(out)
}

pub const REPORT_HEADER: &str =
    "node_id\ttp\ttn\tfp\tfn\taccuracy\tprecision\trecall\tf_score\ttype1_error\ttype2_error";

fn report_row(out: &mut String, node: &str, cm: &ConfusionMatrix, m: Option<&Metrics>) {
    let _ = write!(out, "{node}\t{}\t{}\t{}\t{}", cm.tp, cm.tn, cm.fp, cm.fn_);
    let values = m.map_or([None; 6], Metrics::as_array);
    for v in values {
        let _ = write!(out, "\t{}", opt(v));
    }
    out.push('\n');
}

pub fn report_tsv(report: &EvalReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.per_node {
        report_row(
            &mut out,
            &r.node_id.to_string(),
            &r.confusion,
            r.metrics.as_ref(),
        );
    }
    report_row(
        &mut out,
        "all",
        &report.overall,
        report.overall_metrics.as_ref(),
    );
    out
}

pub const LEDGER_HEADER: &str = "node_id\twindow_samples\traw_samples_monitored\tverdict_messages_sent\tcentralized_equivalent_samples\tverdict_bytes\tcentralized_bytes\tsample_reduction";

pub fn ledger_tsv(ledger: &[TrafficLedger]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for l in ledger {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            l.node_id,
            l.window_samples,
            l.raw_samples_monitored,
            l.verdict_messages_sent,
            l.centralized_equivalent_samples,
            l.verdict_bytes,
            l.centralized_bytes,
            opt(l.sample_reduction())
        );
    }
    out
}

pub fn diagnostics_tsv(summary: &[FeatureSummary]) -> String {
    let mut out = String::from("feature\tmean\tstd_dev\tmin\tmax");
    for k in 1..=10 {
        let _ = write!(out, "\tq{}", k * 10);
    }
    out.push('\n');
    for s in summary {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.name,
            fmt_g9(s.mean),
            fmt_g9(s.std_dev),
            fmt_g9(s.min),
            fmt_g9(s.max)
        );
        for d in s.deciles {
            let _ = write!(out, "\t{}", fmt_g9(d));
        }
        out.push('\n');
    }
    out
}

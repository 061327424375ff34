//! Confusion-matrix scoring of verdict streams and feature diagnostics.
//!
//! The positive class is **Healthy**: `tp` counts healthy windows detected
//! healthy, `tn` damaged windows detected damaged, `fp` damaged windows
//! detected healthy and `fn_` healthy windows detected damaged. Ratios whose
//! denominator is zero are reported as `None`.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;

use crate::gauss::{Label, TrainingMatrix, Verdict};
use crate::signal::{FeatureVector, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{verdicts} verdicts but {truth} ground-truth labels")]
    LengthMismatch { verdicts: usize, truth: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no rows to summarize")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn healthy(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn damaged(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn record(&mut self, detected: Label, truth: Label) {
        match (truth, detected) {
            (Label::Healthy, Label::Healthy) => self.tp += 1,
            (Label::Healthy, Label::Damaged) => self.fn_ += 1,
            (Label::Damaged, Label::Damaged) => self.tn += 1,
            (Label::Damaged, Label::Healthy) => self.fp += 1,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self::new(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn_ + other.fn_,
        )
    }
}

/// Counts detected labels against aligned ground truth.
pub fn confusion(detected: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if detected.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            verdicts: detected.len(),
            truth: truth.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&d, &t) in detected.iter().zip(truth) {
        cm.record(d, t);
    }
    Ok(cm)
}

pub fn confusion_from_verdicts(
    verdicts: &[Verdict],
    truth: &[Label],
) -> Result<ConfusionMatrix, EvalError> {
    let labels: Vec<Label> = verdicts.iter().map(|v| v.label).collect();
    confusion(&labels, truth)
}

/// The six performance measures. `None` marks a 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub type1_error: Option<f64>,
    pub type2_error: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f_score = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy: ratio(cm.tp + cm.tn, total),
        precision,
        recall,
        f_score,
        type1_error: ratio(cm.fp, cm.fp + cm.tn),
        type2_error: ratio(cm.fn_, cm.fn_ + cm.tp),
    })
}

impl Metrics {
    pub fn as_array(&self) -> [Option<f64>; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f_score,
            self.type1_error,
            self.type2_error,
        ]
    }

    pub const NAMES: [&'static str; 6] = [
        "accuracy",
        "precision",
        "recall",
        "f_score",
        "type1_error",
        "type2_error",
    ];
}

/// Scores for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub node_id: NodeId,
    pub confusion: ConfusionMatrix,
    /// `None` when the node produced no scored windows.
    pub metrics: Option<Metrics>,
}

/// Per-node scores plus the pooled total across nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_node: Vec<NodeReport>,
    pub overall: ConfusionMatrix,
    pub overall_metrics: Option<Metrics>,
}

impl EvalReport {
    /// Builds a report from `(node, detected, truth)` triples. Nodes are
    /// listed in ascending id order.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, Label, Label)>,
    {
        let mut per: alloc::collections::BTreeMap<NodeId, ConfusionMatrix> = Default::default();
        for (node, detected, truth) in pairs {
            per.entry(node).or_default().record(detected, truth);
        }
        Self::from_matrices(per)
    }

    pub fn from_matrices<I>(matrices: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, ConfusionMatrix)>,
    {
        let mut per_node: Vec<NodeReport> = matrices
            .into_iter()
            .map(|(node_id, confusion)| NodeReport {
                node_id,
                confusion,
                metrics: metrics(&confusion).ok(),
            })
            .collect();
        per_node.sort_by_key(|r| r.node_id);
        let overall = per_node
            .iter()
            .fold(ConfusionMatrix::default(), |acc, r| acc.merge(&r.confusion));
        Self {
            per_node,
            overall_metrics: metrics(&overall).ok(),
            overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub name: Cow<'static, str>,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Nearest-rank quantiles at 0.1, 0.2, ..., 1.0.
    pub deciles: [f64; 10],
}

/// Per-column summary of a training matrix (population standard deviation).
pub fn export_feature_diagnostics(x: &TrainingMatrix) -> Result<Vec<FeatureSummary>, EvalError> {
    let n = x.rows();
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    let names: Vec<Cow<'static, str>> = if x.dim() == crate::FEATURE_COUNT {
        FeatureVector::NAMES
            .iter()
            .map(|&s| Cow::Borrowed(s))
            .collect()
    } else {
        (1..=x.dim()).map(|j| Cow::Owned(format!("f{j}"))).collect()
    };
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col = x.column(j);
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let mut deciles = [0.0; 10];
            for (k, d) in deciles.iter_mut().enumerate() {
                let rank = ((k + 1) * n).div_ceil(10);
                *d = col[rank - 1];
            }
            FeatureSummary {
                name,
                mean,
                std_dev: libm::sqrt(var),
                min: col[0],
                max: col[n - 1],
                deciles,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use Label::{Damaged as D, Healthy as H};

    #[test]
    fn node_one_counts() {
        let mut truth = vec![H; 72];
        truth.extend(vec![D; 288]);
        let mut detected = vec![H; 72];
        detected.extend(vec![D; 275]);
        detected.extend(vec![H; 13]);
        let cm = confusion(&detected, &truth).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(72, 275, 13, 0));
        assert_eq!(cm.healthy(), 72);
        assert_eq!(cm.damaged(), 288);
    }

    #[test]
    fn empty_and_inverted() {
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
        let truth: Vec<_> = vec![H; 10].into_iter().chain(vec![D; 10]).collect();
        let detected: Vec<_> = truth.iter().map(|l| if *l == H { D } else { H }).collect();
        assert_eq!(
            confusion(&detected, &truth).unwrap(),
            ConfusionMatrix::new(0, 0, 10, 10)
        );
        assert_eq!(
            confusion(&[H], &[]),
            Err(EvalError::LengthMismatch {
                verdicts: 1,
                truth: 0
            })
        );
    }

    #[test]
    fn node_one_metrics() {
        let m = metrics(&ConfusionMatrix::new(72, 275, 13, 0)).unwrap();
        assert!((m.accuracy.unwrap() - 347.0 / 360.0).abs() < 1e-15);
        assert!((m.precision.unwrap() - 72.0 / 85.0).abs() < 1e-15);
        assert_eq!(m.recall, Some(1.0));
        assert!((m.type1_error.unwrap() - 13.0 / 288.0).abs() < 1e-15);
        assert_eq!(m.type2_error, Some(0.0));
        let (p, r) = (72.0 / 85.0, 1.0);
        assert!((m.f_score.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_worst() {
        let m = metrics(&ConfusionMatrix::new(1, 1, 0, 0)).unwrap();
        assert_eq!(
            m.as_array(),
            [
                Some(1.0),
                Some(1.0),
                Some(1.0),
                Some(1.0),
                Some(0.0),
                Some(0.0)
            ]
        );
        let w = metrics(&ConfusionMatrix::new(0, 0, 5, 5)).unwrap();
        assert_eq!(w.accuracy, Some(0.0));
        assert_eq!(w.precision, Some(0.0));
        assert_eq!(w.recall, Some(0.0));
        assert_eq!(w.f_score, None);
        assert_eq!(w.type1_error, Some(1.0));
        assert_eq!(w.type2_error, Some(1.0));
    }

    #[test]
    fn undefined_ratios() {
        assert_eq!(
            metrics(&ConfusionMatrix::default()),
            Err(EvalError::EmptyMatrix)
        );
        // only damaged windows: recall and type-II have no healthy denominator
        let m = metrics(&ConfusionMatrix::new(0, 4, 0, 0)).unwrap();
        assert_eq!(m.recall, None);
        assert_eq!(m.type2_error, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.type1_error, Some(0.0));
    }

    #[test]
    fn report_groups_by_node() {
        let r = EvalReport::from_pairs([(NodeId(2), H, H), (NodeId(1), D, D), (NodeId(2), D, H)]);
        assert_eq!(r.per_node.len(), 2);
        assert_eq!(r.per_node[0].node_id, NodeId(1));
        assert_eq!(r.per_node[1].confusion, ConfusionMatrix::new(1, 0, 0, 1));
        assert_eq!(r.overall, ConfusionMatrix::new(1, 1, 0, 1));
    }

    #[test]
    fn diagnostics_single_row_and_deciles() {
        let x = TrainingMatrix::from_rows(7, &[[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]]).unwrap();
        let d = export_feature_diagnostics(&x).unwrap();
        assert_eq!(d.len(), 7);
        assert_eq!(d[2].name, "variance");
        assert_eq!(d[2].mean, 3.0);
        assert_eq!(d[2].std_dev, 0.0);
        assert!(d[2].deciles.iter().all(|&v| v == 3.0));

        let rows: Vec<[f64; 1]> = (1..=10).rev().map(|v| [v as f64]).collect();
        let x = TrainingMatrix::from_rows(1, &rows).unwrap();
        let d = export_feature_diagnostics(&x).unwrap();
        assert_eq!(d[0].name, "f1");
        assert_eq!(
            d[0].deciles,
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
        );
        assert_eq!((d[0].min, d[0].max), (1.0, 10.0));

        let empty = TrainingMatrix::new(2, vec![]).unwrap();
        assert_eq!(
            export_feature_diagnostics(&empty),
            Err(EvalError::EmptyInput)
        );
    }
}

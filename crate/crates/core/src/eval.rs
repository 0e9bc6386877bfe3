//! Binary classification metrics: ROC curve, trapezoidal AUC, and the
//! threshold metrics (accuracy, precision, recall).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// ROC points (false positive rate, true positive rate), from (0,0) to
/// (1,1), one point per distinct score; both coordinates non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

/// Threshold sweep over distinct score values, descending; tied scores
/// enter together. Requires both classes present.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Usage(format!("labels must be 0 or 1, got {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Usage(format!(
            "ROC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve over the FPR axis. Equals the
/// tie-adjusted pairwise statistic P(s_pos > s_neg) + P(s_pos == s_neg)/2.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for pair in curve.points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        area += (x2 - x1) * (y1 + y2) / 2.0;
    }
    area
}

/// Confusion counts and derived metrics at a score threshold. A prediction
/// is positive iff score >= threshold. When a ratio's denominator is zero
/// the metric reports 0.0 and the matching `*_defined` flag is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

pub fn binary_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<BinaryMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Usage("no samples to score".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &l) in scores.iter().zip(labels) {
        if l > 1 {
            return Err(Error::Usage(format!("labels must be 0 or 1, got {l}")));
        }
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = (tp + fp + tn + fn_) as f64;
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fn_ > 0;
    Ok(BinaryMetrics {
        accuracy: (tp + tn) as f64 / total,
        precision: if precision_defined {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        },
        recall: if recall_defined {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        },
        tp,
        fp,
        tn,
        fn_,
        precision_defined,
        recall_defined,
    })
}

/// The metrics report written by evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricsReport {
    pub fn new(auc: f64, m: &BinaryMetrics) -> Self {
        MetricsReport {
            auc,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self).map_err(crate::error::Error::from)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

/// CSV: `fpr,tpr`, one row per curve point.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "fpr,tpr")?;
    for (fpr, tpr) in &curve.points {
        writeln!(f, "{fpr},{tpr}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Exhaustive pairwise oracle: over all positive x negative pairs,
    /// count wins plus half-ties.
    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 1)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 0)
            .map(|(&s, _)| s)
            .collect();
        let mut acc = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    acc += 1.0;
                } else if p == n {
                    acc += 0.5;
                }
            }
        }
        acc / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfect_separation() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert!(curve.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&curve), 1.0);
    }

    #[test]
    fn all_identical_scores_is_diagonal() {
        let scores = [0.5, 0.5, 0.5, 0.5];
        let labels = [1, 0, 1, 0];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&curve), 0.5);
    }

    #[test]
    fn label_flip_reflects_curve() {
        let scores = [0.9, 0.7, 0.4, 0.2, 0.6];
        let labels = [1, 0, 1, 0, 1];
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let a = roc_curve(&scores, &labels).unwrap();
        let b = roc_curve(&scores, &flipped).unwrap();
        assert!((auc(&a) + auc(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_pairwise_example() {
        // Positives {0.9, 0.7}, negatives {0.8, 0.3}: 3 of 4 pairs ordered
        // correctly.
        let scores = [0.9, 0.7, 0.8, 0.3];
        let labels = [1, 1, 0, 0];
        let curve = roc_curve(&scores, &labels).unwrap();
        assert!((auc(&curve) - 0.75).abs() < 1e-12);
        assert!((pairwise_auc(&scores, &labels) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_equals_pairwise_oracle_on_random_sets() {
        let mut rng = SplitMix64::new(20);
        for _ in 0..100 {
            let n_pos = 2 + rng.next_range(49) as usize;
            let n_neg = 2 + rng.next_range(49) as usize;
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for i in 0..n_pos + n_neg {
                // Coarse grid forces ties.
                scores.push((rng.next_range(10) as f64) / 10.0);
                labels.push(u8::from(i < n_pos));
            }
            let curve = roc_curve(&scores, &labels).unwrap();
            let got = auc(&curve);
            let want = pairwise_auc(&scores, &labels);
            assert!((got - want).abs() < 1e-12, "auc {got} vs oracle {want}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = SplitMix64::new(21);
        let scores: Vec<f64> = (0..40).map(|_| rng.next_f64()).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let a = auc(&roc_curve(&scores, &labels).unwrap());
        let transformed: Vec<f64> = scores.iter().map(|&s| (3.0 * s + 1.0).exp()).collect();
        let b = auc(&roc_curve(&transformed, &labels).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn curve_is_monotone() {
        let mut rng = SplitMix64::new(22);
        let scores: Vec<f64> = (0..60).map(|_| (rng.next_range(6) as f64) / 6.0).collect();
        let labels: Vec<u8> = (0..60).map(|_| rng.next_range(2) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            return; // degenerate draw; covered by single_class_rejected
        }
        let curve = roc_curve(&scores, &labels).unwrap();
        assert_eq!(*curve.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
        for pair in curve.points.windows(2) {
            assert!(pair[1].0 >= pair[0].0);
            assert!(pair[1].1 >= pair[0].1);
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            roc_curve(&[0.4, 0.6], &[1, 1]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn metrics_hand_counted() {
        // tp=2, fp=1, tn=1, fn=0.
        let scores = [0.9, 0.8, 0.7, 0.1];
        let labels = [1, 1, 0, 0];
        let m = binary_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 1, 1, 0));
        assert_eq!(m.accuracy, 0.75);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall, 1.0);
        assert!(m.precision_defined && m.recall_defined);
    }

    #[test]
    fn metrics_perfect_predictor() {
        let scores = [0.9, 0.1];
        let labels = [1, 0];
        let m = binary_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_no_positive_predictions() {
        let scores = [0.1, 0.2];
        let labels = [1, 0];
        let m = binary_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(!m.precision_defined);
        assert!(m.recall_defined);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = binary_metrics(&[0.5], &[1], 0.5).unwrap();
        assert_eq!(m.tp, 1);
    }

    #[test]
    fn accuracy_matches_counts_exactly() {
        let mut rng = SplitMix64::new(23);
        let scores: Vec<f64> = (0..100).map(|_| rng.next_f64()).collect();
        let labels: Vec<u8> = (0..100).map(|_| rng.next_range(2) as u8).collect();
        let m = binary_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.tp + m.fp + m.tn + m.fn_, 100);
        assert_eq!(m.accuracy, (m.tp + m.tn) as f64 / 100.0);
    }

    #[test]
    fn random_scores_give_chance_auc() {
        // Scores independent of labels: AUC concentrates near 0.5.
        let mut rng = SplitMix64::new(31);
        let scores: Vec<f64> = (0..1000).map(|_| rng.next_f64()).collect();
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i % 2 == 0)).collect();
        let a = auc(&roc_curve(&scores, &labels).unwrap());
        assert!((a - 0.5).abs() < 0.1, "auc {a}");
    }

    #[test]
    fn report_json_has_all_eight_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let m = binary_metrics(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        let report = MetricsReport::new(1.0, &m);
        report.write_json(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = value.as_object().unwrap();
        for key in ["auc", "accuracy", "precision", "recall", "tp", "fp", "tn", "fn"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(obj.len(), 8);
        let parsed: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report);
    }
}

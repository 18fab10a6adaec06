//! Binary classification metrics. Class 1 is the positive class.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("label {0} is not 0 or 1")]
    BadLabel(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn confusion(pred: &[usize], truth: &[usize]) -> Result<ConfusionCounts, MetricsError> {
    check_lengths(pred.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(MetricsError::BadLabel(p.max(t))),
        }
    }
    Ok(c)
}

/// Accuracy, precision, recall and F1. Undefined ratios are reported as 0
/// with the matching `*_degenerate` flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
}

pub fn scores_from_counts(c: &ConfusionCounts) -> Scores {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let accuracy = ratio(c.tp + c.tn, c.total()).unwrap_or(0.0);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (None, None) => None,
        (p, r) => {
            let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
            Some(if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            })
        }
    };
    Scores {
        accuracy,
        precision: precision.unwrap_or(0.0),
        recall: recall.unwrap_or(0.0),
        f1: f1.unwrap_or(0.0),
        precision_degenerate: precision.is_none(),
        recall_degenerate: recall.is_none(),
        f1_degenerate: f1.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

fn class_counts(scores: &[f64], truth: &[usize]) -> Result<(usize, usize), MetricsError> {
    check_lengths(scores.len(), truth.len())?;
    let mut pos = 0;
    for &t in truth {
        match t {
            0 => {}
            1 => pos += 1,
            other => return Err(MetricsError::BadLabel(other)),
        }
    }
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// ROC curve over unique score thresholds, descending. The first point is
/// (0, 0) at threshold +inf; the last is (1, 1).
pub fn roc_curve(scores: &[f64], truth: &[usize]) -> Result<Vec<RocPoint>, MetricsError> {
    let (n_pos, n_neg) = class_counts(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(points)
}

/// Trapezoidal area under the ROC curve. A tied group of scores becomes one
/// diagonal segment, which credits tied positive/negative pairs by half.
pub fn auc_roc(scores: &[f64], truth: &[usize]) -> Result<f64, MetricsError> {
    let points = roc_curve(scores, truth)?;
    // Integrate in count space, then normalize once, to keep rounding small.
    let (n_pos, n_neg) = class_counts(scores, truth)?;
    let mut area = 0.0;
    for w in points.windows(2) {
        let dx = (w[1].fpr - w[0].fpr) * n_neg as f64;
        let mean_y = 0.5 * (w[1].tpr + w[0].tpr) * n_pos as f64;
        area += dx * mean_y;
    }
    Ok(area / (n_pos as f64 * n_neg as f64))
}

/// Brute-force Mann-Whitney statistic: the fraction of positive/negative
/// pairs ranked correctly, ties counting one half.
pub fn auc_pair_count(scores: &[f64], truth: &[usize]) -> Result<f64, MetricsError> {
    let (n_pos, n_neg) = class_counts(scores, truth)?;
    let mut twice_wins = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if truth[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if truth[j] != 0 {
                continue;
            }
            if si > sj {
                twice_wins += 2;
            } else if si == sj {
                twice_wins += 1;
            }
        }
    }
    Ok(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Everything an evaluation run reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBundle {
    pub confusion: ConfusionCounts,
    pub scores: Scores,
    /// Absent when the evaluated set has a single class.
    pub auc_roc: Option<f64>,
}

impl MetricBundle {
    pub fn compute(
        pred: &[usize],
        truth: &[usize],
        pos_scores: &[f64],
    ) -> Result<Self, MetricsError> {
        let confusion = confusion(pred, truth)?;
        let auc_roc = match auc_roc(pos_scores, truth) {
            Ok(a) => Some(a),
            Err(MetricsError::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricBundle {
            confusion,
            scores: scores_from_counts(&confusion),
            auc_roc,
        })
    }
}

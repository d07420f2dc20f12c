//! Binary classification metrics and the relative-improvement statistic.
//!
//! Ratios with an empty denominator are `None`, never 0.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    /// Counts for hard predictions `score > threshold`.
    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = ConfusionCounts::default();
        for (s, &l) in scores.iter().zip(labels) {
            match (*s > threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(invalid("accuracy of an empty confusion table"));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    let reported = c.tp + c.fp;
    (reported > 0).then(|| c.tp as f64 / reported as f64)
}

pub fn sensitivity(c: &ConfusionCounts) -> Option<f64> {
    let actual = c.tp + c.fn_;
    (actual > 0).then(|| c.tp as f64 / actual as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(invalid(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("scores must be finite"));
        }
        Ok(ScoredLabels { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.labels.len()
    }
}

/// Mann–Whitney form of the area under the ROC curve; ties count one half.
pub fn auroc(data: &ScoredLabels) -> Result<f64> {
    let n = data.scores.len();
    let n_pos = data.positives();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(invalid("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    // midranks over tied blocks, ranks 1-based
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && data.scores[order[j + 1]] == data.scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if data.labels[k] {
                pos_rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `(transfer - direct) / direct * 100`; `None` when `direct == 0`.
pub fn relative_improvement(metric_tl: f64, metric_direct: f64) -> Option<f64> {
    (metric_direct != 0.0).then(|| (metric_tl - metric_direct) / metric_direct * 100.0)
}

//! Masked classification metrics: all ratios are computed over mask-1
//! pixels only; ratios with zero denominators are reported as absent.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
    pub mask_pixels: u64,
    pub true_positive: u64,
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

/// Streaming confusion counts over mask-1 pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Prediction class is 1 iff probability >= threshold.
    pub fn add(&mut self, prob: f32, label: u8, mask: u8, threshold: f32) {
        if mask == 0 {
            return;
        }
        let predicted = prob >= threshold;
        match (predicted, label != 0) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn report(&self) -> MetricsReport {
        let total = self.tp + self.tn + self.fp + self.fn_;
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        MetricsReport {
            accuracy: ratio(self.tp + self.tn, total),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            iou: ratio(self.tp, self.tp + self.fp + self.fn_),
            mask_pixels: total,
            true_positive: self.tp,
            true_negative: self.tn,
            false_positive: self.fp,
            false_negative: self.fn_,
        }
    }
}

/// Metrics of thresholded probabilities against binary labels within a mask.
pub fn evaluate_masked(
    probs: &[f32],
    labels: &[u8],
    mask: &[u8],
    threshold: f32,
) -> Result<MetricsReport> {
    if probs.len() != labels.len() || probs.len() != mask.len() {
        return Err(Error::validation("metric input lengths differ"));
    }
    let mut counts = ConfusionCounts::default();
    for i in 0..probs.len() {
        counts.add(probs[i], labels[i], mask[i], threshold);
    }
    Ok(counts.report())
}

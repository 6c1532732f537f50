//! Detection metrics and the two detection tasks.
//!
//! Scores follow one orientation everywhere: larger means more uncertain,
//! and the positive class (a misclassification, or an out-of-distribution
//! input) should score high.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::measures::{Measure, UncertaintyScores};
use crate::{Error, Result};

/// One ranked example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    pub is_positive: bool,
}

impl ScoredExample {
    pub fn new(score: f64, is_positive: bool) -> Self {
        Self { score, is_positive }
    }
}

fn count_classes(examples: &[ScoredExample]) -> (usize, usize) {
    let positives = examples.iter().filter(|e| e.is_positive).count();
    (positives, examples.len() - positives)
}

fn check_finite(examples: &[ScoredExample]) -> Result<()> {
    match examples.iter().find(|e| !e.score.is_finite()) {
        Some(e) => Err(Error::Domain {
            function: "detection metric",
            value: e.score,
            requirement: "finite scores",
        }),
        None => Ok(()),
    }
}

fn sorted_by_score(examples: &[ScoredExample], descending: bool) -> Vec<ScoredExample> {
    let mut sorted = examples.to_vec();
    sorted.sort_by(|a, b| {
        let ord = a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    sorted
}

/// Area under the ROC curve.
///
/// Equal to the Mann–Whitney statistic `P(s_pos > s_neg) + ½ P(s_pos = s_neg)`,
/// computed from the rank sum of the positives with mid-ranks for ties.
pub fn auroc(examples: &[ScoredExample]) -> Result<f64> {
    check_finite(examples)?;
    let (positives, negatives) = count_classes(examples);
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            metric: "auroc",
            positives,
            negatives,
        });
    }
    let sorted = sorted_by_score(examples, false);
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end < sorted.len() && sorted[end].score == sorted[start].score {
            end += 1;
        }
        // Ranks start+1 ..= end share their average.
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let group_pos = sorted[start..end].iter().filter(|e| e.is_positive).count();
        rank_sum += mid_rank * group_pos as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Area under the precision–recall curve as average precision.
///
/// Walking the scores in descending order, every positive contributes the
/// precision at its threshold, and the sum is divided by the number of
/// positives. Tied scores form one threshold: all examples of the group are
/// counted before the group's precision is taken, and each positive in the
/// group receives that precision.
pub fn aupr(examples: &[ScoredExample]) -> Result<f64> {
    check_finite(examples)?;
    let (positives, negatives) = count_classes(examples);
    if positives == 0 {
        return Err(Error::SingleClass {
            metric: "aupr",
            positives,
            negatives,
        });
    }
    let sorted = sorted_by_score(examples, true);
    let mut precision_sum = 0.0;
    let mut true_pos = 0usize;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end < sorted.len() && sorted[end].score == sorted[start].score {
            end += 1;
        }
        let group_pos = sorted[start..end].iter().filter(|e| e.is_positive).count();
        true_pos += group_pos;
        let precision = true_pos as f64 / end as f64;
        for _ in 0..group_pos {
            precision_sum += precision;
        }
        start = end;
    }
    Ok(precision_sum / positives as f64)
}

/// AUROC and AUPR of one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasureMetrics {
    pub measure: Measure,
    pub auroc: f64,
    pub aupr: f64,
}

/// Result of a detection task.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionReport {
    /// One entry per measure available from the prediction source, in
    /// [`Measure::ALL`] order.
    pub metrics: Vec<MeasureMetrics>,
    pub positives: usize,
    pub negatives: usize,
    /// Classification error rate (misclassification detection only).
    pub error_rate: Option<f64>,
}

impl DetectionReport {
    pub fn get(&self, measure: Measure) -> Option<&MeasureMetrics> {
        self.metrics.iter().find(|m| m.measure == measure)
    }
}

/// Measures present in every one of `scores`.
pub fn available_measures<'a>(
    scores: impl IntoIterator<Item = &'a UncertaintyScores> + Clone,
) -> Vec<Measure> {
    Measure::ALL
        .into_iter()
        .filter(|&m| scores.clone().into_iter().all(|s| s.get(m).is_some()))
        .collect()
}

fn report_for(
    labeled: &[(&UncertaintyScores, bool)],
    measures: &[Measure],
    error_rate: Option<f64>,
) -> Result<DetectionReport> {
    let mut metrics = Vec::with_capacity(measures.len());
    for &measure in measures {
        let examples: Vec<ScoredExample> = labeled
            .iter()
            .map(|(s, positive)| {
                ScoredExample::new(
                    s.detection_score(measure).expect("measure available"),
                    *positive,
                )
            })
            .collect();
        metrics.push(MeasureMetrics {
            measure,
            auroc: auroc(&examples)?,
            aupr: aupr(&examples)?,
        });
    }
    let positives = labeled.iter().filter(|(_, p)| *p).count();
    Ok(DetectionReport {
        metrics,
        positives,
        negatives: labeled.len() - positives,
        error_rate,
    })
}

/// Misclassification detection: positives are the wrong predictions.
pub fn misclassification_detection(
    scores: &[UncertaintyScores],
    predicted: &[usize],
    labels: &[usize],
) -> Result<DetectionReport> {
    if scores.len() != predicted.len() || scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "scores, predictions and labels",
            expected: scores.len(),
            found: if predicted.len() != scores.len() {
                predicted.len()
            } else {
                labels.len()
            },
        });
    }
    if scores.is_empty() {
        return Err(Error::invalid("scores", "no examples"));
    }
    let wrong: Vec<bool> = predicted.iter().zip(labels).map(|(p, l)| p != l).collect();
    let errors = wrong.iter().filter(|w| **w).count();
    let error_rate = errors as f64 / wrong.len() as f64;
    if errors == 0 || errors == wrong.len() {
        return Err(Error::DegenerateTask { error_rate });
    }
    let labeled: Vec<(&UncertaintyScores, bool)> = scores.iter().zip(wrong).collect();
    report_for(&labeled, &available_measures(scores), Some(error_rate))
}

/// Out-of-distribution detection: positives are the out-of-distribution
/// inputs.
pub fn ood_detection(
    in_scores: &[UncertaintyScores],
    out_scores: &[UncertaintyScores],
) -> Result<DetectionReport> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(Error::SingleClass {
            metric: "ood_detection",
            positives: out_scores.len(),
            negatives: in_scores.len(),
        });
    }
    let labeled: Vec<(&UncertaintyScores, bool)> = in_scores
        .iter()
        .map(|s| (s, false))
        .chain(out_scores.iter().map(|s| (s, true)))
        .collect();
    let measures = available_measures(in_scores.iter().chain(out_scores));
    report_for(&labeled, &measures, None)
}

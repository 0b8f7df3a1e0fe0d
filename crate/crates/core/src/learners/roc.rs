//! ROC curve, AUC and the Youden-optimal threshold.
//!
//! A point with threshold `t` classifies `score > t` as positive. Thresholds
//! sit halfway between neighbouring distinct scores, with `+inf` and `-inf`
//! at the two ends.

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Ordered by decreasing threshold, from (0,0) to (1,1).
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, LearnError> {
    if scores.len() != labels.len() {
        return Err(LearnError::Shape {
            rows: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&b| b).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(LearnError::SingleClass);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(LearnError::NonFinite { row: i, col: 0 });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            let next = scores[order[i]];
            next + (s - next) / 2.0
        } else {
            f64::NEG_INFINITY
        };
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// Threshold maximizing `tpr - fpr`; ties go to the higher threshold.
    pub fn youden(&self) -> RocPoint {
        let mut best = self.points[0];
        for p in &self.points[1..] {
            if p.tpr - p.fpr > best.tpr - best.fpr {
                best = *p;
            }
        }
        best
    }
}

pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, LearnError> {
    Ok(roc_curve(scores, labels)?.auc())
}

pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64, LearnError> {
    Ok(roc_curve(scores, labels)?.youden().threshold)
}

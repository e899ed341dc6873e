//! Keypoint evaluation: OKS, single-person AP over OKS thresholds, and PCK.

use alloc::vec::Vec;

use crate::error::{invalid, mismatch, Error, Result};
use crate::keypoint::KeypointSet;
use crate::math;

/// COCO per-keypoint sigmas for the synthetic skeleton:
/// nose, shoulders, elbows, wrists, then hips, knees, ankles for longer chains.
pub const COCO_SIGMAS: [f64; 13] =
    [0.026, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089];

/// OKS thresholds 0.50, 0.55, ..., 0.95.
pub fn ap_thresholds() -> [f64; 10] {
    core::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Per-joint falloff constants. `scale` in [`oks`] is the bbox area.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OksConfig {
    pub falloff: Vec<f64>,
}

impl OksConfig {
    pub fn new(falloff: Vec<f64>) -> Result<Self> {
        if falloff.is_empty() || falloff.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(invalid!("OKS falloff constants must be positive and finite"));
        }
        Ok(Self { falloff })
    }

    /// COCO convention `k = 2 sigma`, cycling the table for skeletons longer than it.
    pub fn coco(joints: usize) -> Self {
        Self { falloff: (0..joints).map(|j| 2.0 * COCO_SIGMAS[j % COCO_SIGMAS.len()]).collect() }
    }
}

/// Object keypoint similarity of one instance.
pub fn oks(pred: &KeypointSet, gt: &KeypointSet, scale: f64, cfg: &OksConfig) -> Result<f64> {
    if pred.len() != gt.len() || cfg.falloff.len() != gt.len() {
        return Err(mismatch!(
            "oks needs equal joint counts (pred {}, gt {}, falloff {})",
            pred.len(),
            gt.len(),
            cfg.falloff.len()
        ));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid!("oks scale must be positive, got {scale}"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, g), k) in pred.points().iter().zip(gt.points()).zip(&cfg.falloff) {
        if !g.valid {
            continue;
        }
        count += 1;
        if p.valid {
            let d2 = (p.x - g.x) * (p.x - g.x) + (p.y - g.y) * (p.y - g.y);
            sum += math::exp(-d2 / (2.0 * scale * k * k));
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("oks with no valid ground-truth joints".into()));
    }
    Ok(sum / count as f64)
}

/// Mean over the ten thresholds of the fraction of instances with OKS at or above it.
pub fn average_precision(oks_values: &[f64]) -> Result<f64> {
    if oks_values.is_empty() {
        return Err(invalid!("average precision of an empty list"));
    }
    let n = oks_values.len() as f64;
    let thresholds = ap_thresholds();
    let total: f64 = thresholds.iter().map(|t| oks_values.iter().filter(|&&v| v >= *t).count() as f64 / n).sum();
    Ok(total / thresholds.len() as f64)
}

/// Per-joint PCK outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PckResult {
    /// `None` for joints whose ground truth is invalid.
    pub correct: Vec<Option<bool>>,
    pub fraction: f64,
}

impl PckResult {
    pub fn num_evaluated(&self) -> usize {
        self.correct.iter().flatten().count()
    }

    pub fn num_correct(&self) -> usize {
        self.correct.iter().flatten().filter(|c| **c).count()
    }
}

/// A joint is correct iff its error is at most `alpha * max(w, h)` of the bbox.
/// With no valid ground truth the fraction is 0.
pub fn pck(pred: &KeypointSet, gt: &KeypointSet, alpha: f64, bbox: (f64, f64)) -> Result<PckResult> {
    if pred.len() != gt.len() {
        return Err(mismatch!("pck needs equal joint counts (pred {}, gt {})", pred.len(), gt.len()));
    }
    if !(alpha > 0.0) {
        return Err(invalid!("pck alpha must be positive, got {alpha}"));
    }
    if !(bbox.0 > 0.0 && bbox.1 > 0.0) || !bbox.0.is_finite() || !bbox.1.is_finite() {
        return Err(invalid!("degenerate bbox {:?}", bbox));
    }
    let limit = alpha * bbox.0.max(bbox.1);
    let correct: Vec<Option<bool>> = pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| g.valid.then(|| p.valid && p.distance(g) <= limit))
        .collect();
    let evaluated = correct.iter().flatten().count();
    let hits = correct.iter().flatten().filter(|c| **c).count();
    let fraction = if evaluated == 0 { 0.0 } else { hits as f64 / evaluated as f64 };
    Ok(PckResult { correct, fraction })
}

//! Pseudo-heatmap generation: view alignment, max/avg ensembling, per-pixel
//! uncertainty, threshold-and-refine, and uncertainty-guided selection between
//! two students.

use alloc::vec;
use alloc::vec::Vec;

use crate::affine::{warp_heatmap_set, AffineTransform};
use crate::error::{invalid, mismatch, Result};
use crate::heatmap::{argmax_decode, render_gaussian, Dims, Heatmap, HeatmapSet, ValidityMask};
use crate::keypoint::Keypoint;
use crate::math;

/// Uncertainty assigned to pixels seen by fewer than two views.
pub const SENTINEL_UNCERTAINTY: f64 = 1.0;

/// Predictions of several views, all resampled into the canonical frame.
/// Every view carries one mask shared by its joints.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedViews {
    views: Vec<(HeatmapSet, ValidityMask)>,
}

impl AlignedViews {
    pub fn new(views: Vec<(HeatmapSet, ValidityMask)>) -> Result<Self> {
        let Some((first, _)) = views.first() else {
            return Err(invalid!("aligned views need at least one view"));
        };
        let (dims, joints) = (first.dims(), first.num_joints());
        for (i, (set, mask)) in views.iter().enumerate() {
            if set.dims() != dims || set.num_joints() != joints || mask.dims() != dims {
                return Err(mismatch!("view {i} does not match the first view's dims or joint count"));
            }
        }
        Ok(Self { views })
    }

    /// Unwarped views, all pixels valid.
    pub fn from_canonical(sets: Vec<HeatmapSet>) -> Result<Self> {
        Self::new(
            sets.into_iter()
                .map(|s| {
                    let mask = ValidityMask::all_valid(s.dims());
                    (s, mask)
                })
                .collect(),
        )
    }

    /// Aligns predictions made in view frames; `t` maps canonical to view coordinates.
    pub fn align(predictions: &[(HeatmapSet, AffineTransform)], canonical: Dims) -> Result<Self> {
        let views = predictions
            .iter()
            .map(|(set, t)| warp_heatmap_set(set, &t.invert()?, canonical))
            .collect::<Result<Vec<_>>>()?;
        Self::new(views)
    }

    pub fn views(&self) -> &[(HeatmapSet, ValidityMask)] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.views[0].0.dims()
    }

    pub fn num_joints(&self) -> usize {
        self.views[0].0.num_joints()
    }

    /// The first `n` views (at least one).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.views[..n.clamp(1, self.views.len())].to_vec())
    }

    /// Pixels valid in at least one view.
    pub fn coverage(&self) -> ValidityMask {
        let dims = self.dims();
        let bits = (0..dims.len()).map(|i| self.views.iter().any(|(_, m)| m.bits()[i])).collect();
        ValidityMask::from_bits(dims, bits).expect("same dims")
    }
}

/// How aligned views are combined into one pseudo-heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Aggregate {
    #[default]
    Max,
    Avg,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Max => "max",
            Aggregate::Avg => "avg",
        }
    }
}

// Per-joint view sweep: `init` seeds the accumulator from the first valid value,
// `step` folds later ones, `finish` maps (accumulator, count) to the output.
fn reduce(av: &AlignedViews, step: impl Fn(f64, f64) -> f64, finish: impl Fn(f64, usize) -> f64) -> Result<HeatmapSet> {
    let dims = av.dims();
    let n = dims.len();
    let mut acc = vec![0.0; n];
    let mut count = vec![0usize; n];
    let joints = (0..av.num_joints())
        .map(|j| {
            acc.iter_mut().for_each(|v| *v = 0.0);
            count.iter_mut().for_each(|v| *v = 0);
            for (set, mask) in &av.views {
                for (((a, c), &v), &ok) in
                    acc.iter_mut().zip(count.iter_mut()).zip(set.joint(j).values()).zip(mask.bits())
                {
                    if ok {
                        *a = if *c == 0 { v } else { step(*a, v) };
                        *c += 1;
                    }
                }
            }
            let values = acc.iter().zip(&count).map(|(&a, &c)| if c == 0 { 0.0 } else { finish(a, c) }).collect();
            Heatmap::new(dims, values)
        })
        .collect::<Result<Vec<_>>>()?;
    HeatmapSet::new(joints)
}

/// Per-pixel maximum over the views that see the pixel. Pixels no view sees are 0
/// and invalid in the returned mask.
pub fn ensemble_max(av: &AlignedViews) -> Result<(HeatmapSet, ValidityMask)> {
    let set = reduce(av, f64::max, |a, _| a)?;
    Ok((set, av.coverage()))
}

/// Per-pixel mean over the views that see the pixel.
pub fn ensemble_avg(av: &AlignedViews) -> Result<HeatmapSet> {
    reduce(av, |a, v| a + v, |a, c| a / c as f64)
}

pub fn ensemble(av: &AlignedViews, aggregate: Aggregate) -> Result<HeatmapSet> {
    match aggregate {
        Aggregate::Max => Ok(ensemble_max(av)?.0),
        Aggregate::Avg => ensemble_avg(av),
    }
}

/// Per-joint grids of the population standard deviation across views.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    dims: Dims,
    joints: Vec<Vec<f64>>,
    /// Pixels with at least two valid views.
    covered: Vec<bool>,
}

impl UncertaintyMap {
    pub fn new(dims: Dims, joints: Vec<Vec<f64>>) -> Result<Self> {
        dims.validate()?;
        if joints.iter().any(|g| g.len() != dims.len()) {
            return Err(mismatch!("uncertainty grids must have {} values", dims.len()));
        }
        if joints.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(invalid!("uncertainty values must be non-negative"));
        }
        let covered = vec![true; dims.len()];
        Ok(Self { dims, joints, covered })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joint(&self, j: usize) -> &[f64] {
        &self.joints[j]
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }
}

/// Population stdev over valid views per pixel; [`SENTINEL_UNCERTAINTY`] where
/// fewer than two views are valid.
///
/// Values are shifted by the first valid view before averaging, so pixels where
/// every view agrees come out exactly zero.
pub fn uncertainty_map(av: &AlignedViews) -> UncertaintyMap {
    let dims = av.dims();
    let n = dims.len();
    let mut count = vec![0usize; n];
    for (_, mask) in &av.views {
        count.iter_mut().zip(mask.bits()).for_each(|(c, &ok)| *c += ok as usize);
    }
    let covered: Vec<bool> = count.iter().map(|&c| c >= 2).collect();
    let mut pivot = vec![f64::NAN; n];
    let mut mean = vec![0.0; n];
    let joints = (0..av.num_joints())
        .map(|j| {
            pivot.iter_mut().for_each(|v| *v = f64::NAN);
            mean.iter_mut().for_each(|v| *v = 0.0);
            for (set, mask) in &av.views {
                for (((m, p), &v), &ok) in
                    mean.iter_mut().zip(pivot.iter_mut()).zip(set.joint(j).values()).zip(mask.bits())
                {
                    if ok {
                        if p.is_nan() {
                            *p = v;
                        }
                        *m += v - *p;
                    }
                }
            }
            mean.iter_mut().zip(&count).for_each(|(m, &c)| *m /= c.max(1) as f64);
            let mut var = vec![0.0; n];
            for (set, mask) in &av.views {
                for ((((s, &m), &p), &v), &ok) in
                    var.iter_mut().zip(&mean).zip(&pivot).zip(set.joint(j).values()).zip(mask.bits())
                {
                    if ok {
                        let d = v - p - m;
                        *s += d * d;
                    }
                }
            }
            var.iter()
                .zip(&count)
                .map(|(&s, &c)| if c < 2 { SENTINEL_UNCERTAINTY } else { math::sqrt(s / c as f64) })
                .collect()
        })
        .collect();
    UncertaintyMap { dims, joints, covered }
}

/// Scalar uncertainty per joint: the maximum of its grid.
pub fn joint_uncertainty(um: &UncertaintyMap) -> Vec<f64> {
    um.joints.iter().map(|g| g.iter().copied().fold(0.0, f64::max)).collect()
}

/// Like [`joint_uncertainty`] but over pixels seen by at least two views only,
/// so grid corners that rotate out of most views do not saturate every joint.
/// A joint with no such pixel gets the sentinel.
pub fn covered_joint_uncertainty(um: &UncertaintyMap) -> Vec<f64> {
    if !um.covered.iter().any(|c| *c) {
        return vec![SENTINEL_UNCERTAINTY; um.joints.len()];
    }
    um.joints
        .iter()
        .map(|g| g.iter().zip(&um.covered).filter(|(_, c)| **c).map(|(v, _)| *v).fold(0.0, f64::max))
        .collect()
}

/// Which pixels feed the scalar joint uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum UncertaintyScope {
    /// Every pixel, sentinel included.
    Full,
    /// Pixels with at least two valid views.
    #[default]
    Covered,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(invalid!("tau must lie in [0, 1), got {tau}"));
    }
    Ok(())
}

/// Accepts a joint whose peak exceeds `tau` and replaces it by a unit Gaussian at
/// the argmax pixel; otherwise returns a zero map and rejects it.
pub fn threshold_and_refine(hm: &Heatmap, tau: f64, sigma: f64) -> Result<(Heatmap, bool)> {
    check_tau(tau)?;
    let peak = argmax_decode(hm);
    if hm.max_value() > tau {
        Ok((render_gaussian((peak.x, peak.y), sigma, hm.dims(), 1.0)?, true))
    } else {
        if !(sigma > 0.0) {
            return Err(invalid!("sigma must be positive, got {sigma}"));
        }
        Ok((Heatmap::zeros(hm.dims())?, false))
    }
}

/// Thresholding without refinement: accepted joints keep their ensembled map.
pub fn threshold_only(hm: &Heatmap, tau: f64) -> Result<(Heatmap, bool)> {
    check_tau(tau)?;
    if hm.max_value() > tau {
        Ok((hm.clone(), true))
    } else {
        Ok((Heatmap::zeros(hm.dims())?, false))
    }
}

/// Which student produced a pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Source {
    SelfStudent,
    Other,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::SelfStudent => "self",
            Source::Other => "other",
        }
    }
}

/// Pseudo-label of one joint.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub heatmap: Heatmap,
    pub accepted: bool,
    pub uncertainty: f64,
    pub source: Source,
    /// Argmax of the ensembled map, in the canonical frame.
    pub peak: Keypoint,
    /// Whether `heatmap` is a unit Gaussian at `peak`.
    pub refined: bool,
}

impl PseudoLabel {
    /// A label carrying a heatmap directly, e.g. one view's raw prediction.
    pub fn raw(heatmap: Heatmap, source: Source) -> Self {
        let peak = argmax_decode(&heatmap);
        Self { heatmap, accepted: true, uncertainty: 0.0, source, peak, refined: false }
    }
}

/// One [`PseudoLabel`] per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    labels: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn new(labels: Vec<PseudoLabel>) -> Result<Self> {
        let Some(first) = labels.first() else {
            return Err(invalid!("pseudo-label set needs at least one joint"));
        };
        let dims = first.heatmap.dims();
        if labels.iter().any(|l| l.heatmap.dims() != dims) {
            return Err(mismatch!("pseudo-labels must share dims"));
        }
        if labels.iter().any(|l| l.accepted && !l.uncertainty.is_finite()) {
            return Err(invalid!("accepted pseudo-labels need a finite uncertainty"));
        }
        Ok(Self { labels })
    }

    /// Every joint accepted, heatmaps taken as they are.
    pub fn from_heatmaps(set: &HeatmapSet, source: Source) -> Self {
        Self { labels: set.joints().iter().map(|h| PseudoLabel::raw(h.clone(), source)).collect() }
    }

    pub fn labels(&self) -> &[PseudoLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.labels[0].heatmap.dims()
    }

    pub fn num_accepted(&self) -> usize {
        self.labels.iter().filter(|l| l.accepted).count()
    }

    pub fn heatmaps(&self) -> Result<HeatmapSet> {
        HeatmapSet::new(self.labels.iter().map(|l| l.heatmap.clone()).collect())
    }

    /// Peaks of accepted joints; rejected joints decode invalid.
    pub fn keypoints(&self) -> crate::keypoint::KeypointSet {
        self.labels.iter().map(|l| if l.accepted { l.peak } else { Keypoint::invalid() }).collect()
    }

    /// Labels re-expressed in the frame reached through `t` (canonical to view).
    /// Refined labels are re-rendered at the mapped peak; a peak leaving the grid
    /// rejects the joint. Unrefined labels are warped.
    pub fn in_view(&self, t: &AffineTransform, sigma: f64) -> Result<Self> {
        let dims = self.dims();
        let labels = self
            .labels
            .iter()
            .map(|l| {
                let mut out = l.clone();
                if !l.accepted {
                    return Ok(out);
                }
                if l.refined {
                    let (x, y) = t.apply(l.peak.x, l.peak.y);
                    out.peak = Keypoint { x, y, ..l.peak };
                    if dims.contains(x, y) {
                        out.heatmap = render_gaussian((x, y), sigma, dims, 1.0)?;
                    } else {
                        out.heatmap = Heatmap::zeros(dims)?;
                        out.accepted = false;
                    }
                } else {
                    out.heatmap = crate::affine::warp_heatmap(&l.heatmap, t, dims)?.0;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels })
    }
}

/// Per joint, keeps `self` when `u_self + delta < u_other`, else `other`. A chosen
/// label that failed the threshold falls back to the other one; if both failed the
/// joint stays rejected.
pub fn select_pseudo(p_self: &PseudoLabelSet, p_other: &PseudoLabelSet, delta: f64) -> Result<PseudoLabelSet> {
    if p_self.len() != p_other.len() {
        return Err(invalid!("pseudo-label sets cover {} and {} joints", p_self.len(), p_other.len()));
    }
    if !(delta >= 0.0) {
        return Err(invalid!("delta must be >= 0, got {delta}"));
    }
    if p_self.dims() != p_other.dims() {
        return Err(mismatch!("pseudo-label sets have different dims"));
    }
    let labels = p_self
        .labels
        .iter()
        .zip(&p_other.labels)
        .map(|(s, o)| {
            let mut s = s.clone();
            s.source = Source::SelfStudent;
            let mut o = o.clone();
            o.source = Source::Other;
            let prefer_self = s.uncertainty + delta < o.uncertainty;
            let (first, second) = if prefer_self { (s, o) } else { (o, s) };
            if first.accepted || !second.accepted {
                first
            } else {
                second
            }
        })
        .collect();
    Ok(PseudoLabelSet { labels })
}

/// Knobs of the pseudo-label pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineOptions {
    pub tau: f64,
    pub delta: f64,
    pub sigma_px: f64,
    /// Strong views per image; the pipeline sees `k + 1` views.
    pub k: usize,
    pub aggregate: Aggregate,
    pub refine: bool,
    pub select: bool,
    pub uncertainty_scope: UncertaintyScope,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            tau: 0.1,
            delta: 0.05,
            sigma_px: 2.0,
            k: 4,
            aggregate: Aggregate::Max,
            refine: true,
            select: true,
            uncertainty_scope: UncertaintyScope::Covered,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.sigma_px > 0.0) || !self.sigma_px.is_finite() {
            return Err(invalid!("sigma_px must be positive, got {}", self.sigma_px));
        }
        Ok(())
    }
}

/// Ensemble, then uncertainty on the raw aligned views, then threshold (and
/// optionally refine). Labels are tagged as the caller's own.
pub fn build_pseudo_labels(av: &AlignedViews, opts: &PipelineOptions) -> Result<PseudoLabelSet> {
    opts.validate()?;
    let u = scoped_uncertainty(&uncertainty_map(av), opts.uncertainty_scope);
    label_joints(&ensemble(av, opts.aggregate)?, &u, opts)
}

/// Scalar joint uncertainties under `scope`.
pub fn scoped_uncertainty(um: &UncertaintyMap, scope: UncertaintyScope) -> Vec<f64> {
    match scope {
        UncertaintyScope::Full => joint_uncertainty(um),
        UncertaintyScope::Covered => covered_joint_uncertainty(um),
    }
}

/// Thresholds (and optionally refines) an already merged set, attaching `uncertainty`.
pub fn label_joints(merged: &HeatmapSet, uncertainty: &[f64], opts: &PipelineOptions) -> Result<PseudoLabelSet> {
    if uncertainty.len() != merged.num_joints() {
        return Err(mismatch!("{} uncertainties for {} joints", uncertainty.len(), merged.num_joints()));
    }
    let labels = merged
        .joints()
        .iter()
        .zip(uncertainty)
        .map(|(hm, &uncertainty)| {
            let peak = argmax_decode(hm);
            let (heatmap, accepted) = if opts.refine {
                threshold_and_refine(hm, opts.tau, opts.sigma_px)?
            } else {
                threshold_only(hm, opts.tau)?
            };
            Ok(PseudoLabel { heatmap, accepted, uncertainty, source: Source::SelfStudent, peak, refined: opts.refine })
        })
        .collect::<Result<Vec<_>>>()?;
    PseudoLabelSet::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(dims: Dims, joints: usize, v: f64) -> HeatmapSet {
        HeatmapSet::new((0..joints).map(|_| Heatmap::new(dims, vec![v; dims.len()]).unwrap()).collect()).unwrap()
    }

    fn label(u: f64, accepted: bool) -> PseudoLabel {
        let dims = Dims::new(4, 4);
        PseudoLabel {
            heatmap: Heatmap::zeros(dims).unwrap(),
            accepted,
            uncertainty: u,
            source: Source::SelfStudent,
            peak: Keypoint::new(1.0, 1.0, 1.0),
            refined: true,
        }
    }

    fn set(labels: Vec<PseudoLabel>) -> PseudoLabelSet {
        PseudoLabelSet::new(labels).unwrap()
    }

    #[test]
    fn ensemble_examples() {
        let d = Dims::new(3, 2);
        let av = AlignedViews::from_canonical(vec![constant(d, 1, 0.3), constant(d, 1, 0.7)]).unwrap();
        assert!(ensemble_max(&av).unwrap().0.joint(0).values().iter().all(|v| *v == 0.7));
        assert!(ensemble_avg(&av).unwrap().joint(0).values().iter().all(|v| (*v - 0.5).abs() < 1e-12));
        assert!(AlignedViews::new(vec![]).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let d = Dims::new(2, 2);
        let av = AlignedViews::from_canonical(vec![constant(d, 2, 0.0), constant(d, 2, 1.0)]).unwrap();
        let um = uncertainty_map(&av);
        assert!(um.joint(1).iter().all(|v| *v == 0.5));
        assert_eq!(joint_uncertainty(&um), vec![0.5, 0.5]);
        let single = AlignedViews::from_canonical(vec![constant(d, 1, 0.4)]).unwrap();
        assert!(uncertainty_map(&single).joint(0).iter().all(|v| *v == SENTINEL_UNCERTAINTY));
    }

    #[test]
    fn refine_examples() {
        let d = Dims::new(16, 16);
        let hm = render_gaussian((5.0, 6.0), 2.0, d, 0.9).unwrap();
        let (out, ok) = threshold_and_refine(&hm, 0.1, 2.0).unwrap();
        assert!(ok);
        assert_eq!(out, render_gaussian((5.0, 6.0), 2.0, d, 1.0).unwrap());
        let weak = render_gaussian((5.0, 6.0), 2.0, d, 0.05).unwrap();
        let (out, ok) = threshold_and_refine(&weak, 0.1, 2.0).unwrap();
        assert!(!ok && out.max_value() == 0.0);
        assert!(threshold_and_refine(&weak, 0.0, 2.0).unwrap().1);
        assert!(threshold_and_refine(&weak, 1.0, 2.0).is_err());
    }

    #[test]
    fn selection_examples() {
        let picked = select_pseudo(&set(vec![label(0.10, true)]), &set(vec![label(0.30, true)]), 0.05).unwrap();
        assert_eq!(picked.labels()[0].source, Source::SelfStudent);
        let picked = select_pseudo(&set(vec![label(0.2, true)]), &set(vec![label(0.2, true)]), 0.05).unwrap();
        assert_eq!(picked.labels()[0].source, Source::Other);
        let picked = select_pseudo(&set(vec![label(0.0, false)]), &set(vec![label(0.9, true)]), 0.0).unwrap();
        assert_eq!(picked.labels()[0].source, Source::Other);
        let picked = select_pseudo(&set(vec![label(0.0, true)]), &set(vec![label(0.9, false)]), 0.0).unwrap();
        assert_eq!(picked.labels()[0].source, Source::SelfStudent);
        let picked = select_pseudo(&set(vec![label(0.0, false)]), &set(vec![label(0.9, false)]), 0.0).unwrap();
        assert!(!picked.labels()[0].accepted);
        let two = set(vec![label(0.1, true), label(0.1, true)]);
        assert!(select_pseudo(&two, &set(vec![label(0.1, true)]), 0.0).is_err());
    }
}

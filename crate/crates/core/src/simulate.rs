//! Training-free Monte Carlo of the pseudo-label pipeline.
//!
//! Each trial samples a figure, lets two simulated students predict heatmaps in
//! one weak and `k` strong views, aligns the views back, and scores the
//! pseudo-labels of every variant (view count x aggregate x selection) against
//! ground truth.

use alloc::vec::Vec;

use crate::augment::Augmentation;
use crate::error::{invalid, Result};
use crate::keypoint::KeypointSet;
use crate::pseudo::{
    ensemble, label_joints, scoped_uncertainty, select_pseudo, uncertainty_map, Aggregate, AlignedViews,
    PipelineOptions, PseudoLabelSet, Source,
};
use crate::rng;
use crate::synth::{sample_pose, simulate_predictor, NoiseProfile, Pose, SceneConfig};

/// Whose labels student theta ends up with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Selection {
    /// Theta's own pseudo-labels.
    Own,
    /// Always the other student's (plain cross supervision).
    Other,
    /// Uncertainty-guided choice between the two.
    Guided,
}

impl Selection {
    pub const ALL: [Selection; 3] = [Selection::Own, Selection::Other, Selection::Guided];

    pub fn name(self) -> &'static str {
        match self {
            Selection::Own => "own",
            Selection::Other => "other",
            Selection::Guided => "guided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimulationSetup {
    pub trials: usize,
    pub seed: u64,
    /// Noise of student theta.
    pub theta: NoiseProfile,
    /// Noise of student xi.
    pub xi: NoiseProfile,
    pub pck_alpha: f64,
}

impl Default for SimulationSetup {
    fn default() -> Self {
        Self { trials: 1000, seed: 0, theta: NoiseProfile::default(), xi: NoiseProfile::default(), pck_alpha: 0.1 }
    }
}

impl SimulationSetup {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid!("simulate.trials must be at least 1"));
        }
        if !(self.pck_alpha > 0.0) {
            return Err(invalid!("pck_alpha must be positive, got {}", self.pck_alpha));
        }
        self.theta.validate()?;
        self.xi.validate()
    }
}

/// Identifies one pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VariantKey {
    pub views: usize,
    pub aggregate: Aggregate,
    pub selection: Selection,
}

/// Per-joint score of one variant in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointScore {
    /// Localization error, or the grid diagonal when the label was rejected.
    pub error: f64,
    pub correct: bool,
    pub accepted: bool,
}

/// A guided selection decision at the full view count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub aggregate: Aggregate,
    pub chose_self: bool,
    pub self_error: f64,
    pub other_error: f64,
}

impl Decision {
    /// `None` when both candidates are equally good.
    pub fn picked_better(&self) -> Option<bool> {
        if self.self_error == self.other_error {
            None
        } else {
            Some(self.chose_self == (self.self_error < self.other_error))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub scores: Vec<(VariantKey, Vec<JointScore>)>,
    pub decisions: Vec<Decision>,
}

/// Heatmap predictions of one simulated student in its weak view and `k` strong views.
pub fn simulate_views<R: rand::Rng + ?Sized>(
    gt: &KeypointSet,
    scene: &SceneConfig,
    profile: &NoiseProfile,
    opts: &PipelineOptions,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<AlignedViews> {
    let dims = scene.dims();
    let mut predictions = Vec::with_capacity(opts.k + 1);
    for v in 0..=opts.k {
        let t = if v == 0 { aug.weak.sample(rng, dims) } else { aug.strong.sample(rng, dims) };
        let in_view = t.apply_keypoints(gt, dims);
        predictions.push((simulate_predictor(&in_view, dims, profile, opts.sigma_px, rng)?, t));
    }
    AlignedViews::align(&predictions, dims)
}

fn score(labels: &PseudoLabelSet, pose: &Pose, alpha: f64, penalty: f64) -> Vec<JointScore> {
    let limit = alpha * pose.bbox.0.max(pose.bbox.1);
    labels
        .labels()
        .iter()
        .zip(pose.keypoints.points())
        .map(|(l, g)| {
            let error = if l.accepted && l.peak.valid { l.peak.distance(g) } else { penalty };
            JointScore { error, correct: l.accepted && error <= limit, accepted: l.accepted }
        })
        .collect()
}

/// Runs trial `trial`; it draws only from its own stream of `setup.seed`.
pub fn simulate_trial(
    trial: usize,
    scene: &SceneConfig,
    setup: &SimulationSetup,
    opts: &PipelineOptions,
    aug: &Augmentation,
) -> Result<TrialOutcome> {
    let mut rng = rng::stream(setup.seed, trial as u64);
    let pose = sample_pose(scene, &mut rng)?;
    let dims = scene.dims();
    let penalty = libm::hypot(dims.width as f64, dims.height as f64);
    let views = [
        simulate_views(&pose.keypoints, scene, &setup.theta, opts, aug, &mut rng)?,
        simulate_views(&pose.keypoints, scene, &setup.xi, opts, aug, &mut rng)?,
    ];
    let mut scores = Vec::new();
    let mut decisions = Vec::new();
    for n in 1..=opts.k + 1 {
        let subsets = [views[0].truncated(n)?, views[1].truncated(n)?];
        let u = [
            scoped_uncertainty(&uncertainty_map(&subsets[0]), opts.uncertainty_scope),
            scoped_uncertainty(&uncertainty_map(&subsets[1]), opts.uncertainty_scope),
        ];
        for aggregate in [Aggregate::Max, Aggregate::Avg] {
            let o = PipelineOptions { aggregate, ..*opts };
            let own = label_joints(&ensemble(&subsets[0], aggregate)?, &u[0], &o)?;
            let other = label_joints(&ensemble(&subsets[1], aggregate)?, &u[1], &o)?;
            let guided = select_pseudo(&own, &other, opts.delta)?;
            if n == opts.k + 1 {
                let own_scores = score(&own, &pose, setup.pck_alpha, penalty);
                let other_scores = score(&other, &pose, setup.pck_alpha, penalty);
                for (j, l) in guided.labels().iter().enumerate() {
                    decisions.push(Decision {
                        aggregate,
                        chose_self: l.source == Source::SelfStudent,
                        self_error: own_scores[j].error,
                        other_error: other_scores[j].error,
                    });
                }
            }
            for (selection, labels) in
                [(Selection::Own, &own), (Selection::Other, &other), (Selection::Guided, &guided)]
            {
                scores.push((
                    VariantKey { views: n, aggregate, selection },
                    score(labels, &pose, setup.pck_alpha, penalty),
                ));
            }
        }
    }
    Ok(TrialOutcome { trial, scores, decisions })
}

/// Aggregate statistics of one variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSummary {
    pub key: VariantKey,
    pub mean_error: f64,
    pub pck: f64,
    pub accept_rate: f64,
    pub joints: usize,
}

/// Guided-selection statistics for one aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSummary {
    pub aggregate: Aggregate,
    pub decisions: usize,
    pub self_rate: f64,
    /// Share of non-tied decisions that picked the lower-error label.
    pub better_rate: f64,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub variants: Vec<VariantSummary>,
    pub selection: Vec<SelectionSummary>,
}

impl SimulationSummary {
    pub fn variant(&self, views: usize, aggregate: Aggregate, selection: Selection) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.key == VariantKey { views, aggregate, selection })
    }

    pub fn selection_for(&self, aggregate: Aggregate) -> Option<&SelectionSummary> {
        self.selection.iter().find(|s| s.aggregate == aggregate)
    }
}

/// Folds trial outcomes in trial order.
pub fn summarize(outcomes: &[TrialOutcome]) -> Result<SimulationSummary> {
    let first = outcomes.first().ok_or_else(|| invalid!("no trials to summarize"))?;
    let mut sorted: Vec<&TrialOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.trial);
    let mut variants = Vec::with_capacity(first.scores.len());
    for (i, (key, _)) in first.scores.iter().enumerate() {
        let (mut err, mut hits, mut acc, mut n) = (0.0, 0usize, 0usize, 0usize);
        for o in &sorted {
            for s in &o.scores[i].1 {
                err += s.error;
                hits += s.correct as usize;
                acc += s.accepted as usize;
                n += 1;
            }
        }
        let n_f = n.max(1) as f64;
        variants.push(VariantSummary {
            key: *key,
            mean_error: err / n_f,
            pck: hits as f64 / n_f,
            accept_rate: acc as f64 / n_f,
            joints: n,
        });
    }
    variants.sort_by_key(|v| v.key);
    let mut selection = Vec::new();
    for aggregate in [Aggregate::Max, Aggregate::Avg] {
        let ds: Vec<&Decision> =
            sorted.iter().flat_map(|o| o.decisions.iter()).filter(|d| d.aggregate == aggregate).collect();
        let decided: Vec<bool> = ds.iter().filter_map(|d| d.picked_better()).collect();
        selection.push(SelectionSummary {
            aggregate,
            decisions: ds.len(),
            self_rate: ds.iter().filter(|d| d.chose_self).count() as f64 / ds.len().max(1) as f64,
            better_rate: decided.iter().filter(|b| **b).count() as f64 / decided.len().max(1) as f64,
            ties: ds.len() - decided.len(),
        });
    }
    Ok(SimulationSummary { variants, selection })
}

/// Runs all trials sequentially with the default augmentation.
pub fn run_simulation(
    scene: &SceneConfig,
    setup: &SimulationSetup,
    opts: &PipelineOptions,
) -> Result<SimulationSummary> {
    setup.validate()?;
    opts.validate()?;
    let aug = Augmentation::default();
    let outcomes =
        (0..setup.trials).map(|t| simulate_trial(t, scene, setup, opts, &aug)).collect::<Result<Vec<_>>>()?;
    summarize(&outcomes)
}

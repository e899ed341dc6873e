//! A toy dual-student heatmap regressor with analytic gradients.
//!
//! Each student maps the `C` feature channels of a pixel to one response per joint
//! through a linear layer and a clamp to `[0, 1]`. Every training step sums the
//! supervised gradient of a labeled batch and the weighted unsupervised gradient
//! of an unlabeled batch, then takes one SGD step.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::affine::AffineTransform;
use crate::augment::Augmentation;
use crate::error::{invalid, mismatch, Error, Result};
use crate::heatmap::{Heatmap, HeatmapSet};
use crate::metrics::{average_precision, oks, pck, OksConfig};
use crate::pseudo::{build_pseudo_labels, select_pseudo, AlignedViews, PipelineOptions, PseudoLabelSet, Source};
use crate::rng::{self, streams, StreamRng};
use crate::synth::{FeatureGrid, SyntheticScene};

/// The two students.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StudentId {
    Theta,
    Xi,
}

impl StudentId {
    pub fn index(self) -> usize {
        match self {
            StudentId::Theta => 0,
            StudentId::Xi => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(StudentId::Theta),
            1 => Ok(StudentId::Xi),
            _ => Err(invalid!("student index must be 0 or 1, got {i}")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StudentId::Theta => "theta",
            StudentId::Xi => "xi",
        }
    }
}

/// Per-joint linear readout: row `j` holds `C` channel weights followed by a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub id: StudentId,
    joints: usize,
    channels: usize,
    weights: Vec<f64>,
}

impl StudentModel {
    pub fn zeros(id: StudentId, joints: usize, channels: usize) -> Result<Self> {
        Self::from_weights(id, joints, channels, vec![0.0; joints * (channels + 1)])
    }

    pub fn from_weights(id: StudentId, joints: usize, channels: usize, weights: Vec<f64>) -> Result<Self> {
        if joints == 0 || channels == 0 {
            return Err(invalid!("student needs at least one joint and one channel"));
        }
        if weights.len() != joints * (channels + 1) {
            return Err(mismatch!("expected {} weights, got {}", joints * (channels + 1), weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite weight".into()));
        }
        Ok(Self { id, joints, channels, weights })
    }

    /// Starting point for training on synthetic scenes: small positive weights on
    /// the appearance channels (all but the last three), a slightly negative bias,
    /// and `N(0, 0.01^2)` noise everywhere.
    pub fn initialized<R: Rng + ?Sized>(id: StudentId, joints: usize, channels: usize, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(id, joints, channels)?;
        let noise = Normal::new(0.0, 0.01).expect("valid normal");
        let appearance = channels.saturating_sub(3);
        for j in 0..joints {
            let row = m.row_mut(j);
            for (c, w) in row.iter_mut().enumerate() {
                let base = if c < appearance {
                    0.02
                } else if c == channels {
                    -0.05
                } else {
                    0.0
                };
                *w = base + noise.sample(rng);
            }
        }
        Ok(m)
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.channels + 1;
        &self.weights[j * n..(j + 1) * n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.channels + 1;
        &mut self.weights[j * n..(j + 1) * n]
    }

    /// Pre-clamp responses, joint-major then row-major.
    pub fn forward(&self, features: &FeatureGrid) -> Result<Vec<f64>> {
        if features.channels() != self.channels {
            return Err(invalid!("model expects {} channels, features have {}", self.channels, features.channels()));
        }
        let n = features.dims().len();
        let mut z = vec![0.0; self.joints * n];
        for j in 0..self.joints {
            let row = self.row(j);
            let out = &mut z[j * n..(j + 1) * n];
            out.iter_mut().for_each(|v| *v = row[self.channels]);
            for (c, &w) in row[..self.channels].iter().enumerate() {
                if w != 0.0 {
                    out.iter_mut().zip(features.channel(c)).for_each(|(o, f)| *o += w * f);
                }
            }
        }
        Ok(z)
    }

    /// Gradient wrt the weights given `grad_pred`, the loss gradient wrt the clamped
    /// output. Pixels whose response was clamped pass no gradient.
    pub fn backward(&self, features: &FeatureGrid, z: &[f64], grad_pred: &[f64]) -> Result<Vec<f64>> {
        let n = features.dims().len();
        if z.len() != self.joints * n || grad_pred.len() != z.len() || features.channels() != self.channels {
            return Err(mismatch!("backward inputs do not match the model"));
        }
        let mut grad = vec![0.0; self.weights.len()];
        let mut masked = vec![0.0; n];
        for j in 0..self.joints {
            let zj = &z[j * n..(j + 1) * n];
            let gj = &grad_pred[j * n..(j + 1) * n];
            let mut any = false;
            for ((m, &zv), &g) in masked.iter_mut().zip(zj).zip(gj) {
                *m = if zv > 0.0 && zv < 1.0 { g } else { 0.0 };
                any |= *m != 0.0;
            }
            if !any {
                continue;
            }
            let row = &mut grad[j * (self.channels + 1)..(j + 1) * (self.channels + 1)];
            for (c, slot) in row[..self.channels].iter_mut().enumerate() {
                *slot = masked.iter().zip(features.channel(c)).map(|(m, f)| m * f).sum();
            }
            row[self.channels] = masked.iter().sum();
        }
        Ok(grad)
    }
}

/// Clamped heatmaps for `features`.
pub fn predict(m: &StudentModel, features: &FeatureGrid) -> Result<HeatmapSet> {
    to_heatmaps(&m.forward(features)?, m.joints, features)
}

fn to_heatmaps(z: &[f64], joints: usize, features: &FeatureGrid) -> Result<HeatmapSet> {
    let dims = features.dims();
    let n = dims.len();
    HeatmapSet::new((0..joints).map(|j| Heatmap::new(dims, z[j * n..(j + 1) * n].to_vec())).collect::<Result<_>>()?)
}

/// A loss value with its gradient wrt the prediction, joint-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_pair(pred: &HeatmapSet, dims: crate::heatmap::Dims, joints: usize) -> Result<()> {
    if pred.dims() != dims || pred.num_joints() != joints {
        return Err(mismatch!(
            "prediction is {}x{}x{}, target {}x{}x{}",
            pred.num_joints(),
            pred.dims().height,
            pred.dims().width,
            joints,
            dims.height,
            dims.width
        ));
    }
    Ok(())
}

/// Mean squared error over all joints and pixels.
pub fn supervised_loss(pred: &HeatmapSet, gt: &HeatmapSet) -> Result<LossGrad> {
    check_pair(pred, gt.dims(), gt.num_joints())?;
    let count = (gt.num_joints() * gt.dims().len()) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(count as usize);
    for (p, g) in pred.joints().iter().zip(gt.joints()) {
        for (a, b) in p.values().iter().zip(g.values()) {
            let d = a - b;
            loss += d * d;
            grad.push(2.0 * d / count);
        }
    }
    Ok(LossGrad { loss: loss / count, grad })
}

/// Mean squared error over accepted joints only; targets are constants.
/// No accepted joint gives zero loss and zero gradient.
pub fn unsupervised_loss(pred: &HeatmapSet, targets: &PseudoLabelSet) -> Result<LossGrad> {
    check_pair(pred, targets.dims(), targets.len())?;
    let n = pred.dims().len();
    let accepted = targets.num_accepted();
    let mut grad = vec![0.0; targets.len() * n];
    if accepted == 0 {
        return Ok(LossGrad { loss: 0.0, grad });
    }
    let count = (accepted * n) as f64;
    let mut loss = 0.0;
    for (j, (p, t)) in pred.joints().iter().zip(targets.labels()).enumerate() {
        if !t.accepted {
            continue;
        }
        for (i, (a, b)) in p.values().iter().zip(t.heatmap.values()).enumerate() {
            let d = a - b;
            loss += d * d;
            grad[j * n + i] = 2.0 * d / count;
        }
    }
    Ok(LossGrad { loss: loss / count, grad })
}

/// `w - lr * grad`.
pub fn sgd_step(m: &StudentModel, grad: &[f64], lr: f64) -> Result<StudentModel> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(invalid!("learning rate must be positive, got {lr}"));
    }
    if grad.len() != m.weights.len() {
        return Err(mismatch!("gradient has {} entries, model {}", grad.len(), m.weights.len()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let weights = m.weights.iter().zip(grad).map(|(w, g)| w - lr * g).collect();
    StudentModel::from_weights(m.id, m.joints, m.channels, weights)
}

/// Objective used on unlabeled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TrainMode {
    SupervisedOnly,
    /// Each student regresses the other's single weak-view heatmaps.
    DualposeBaseline,
    /// Multi-view pseudo-labels, gated by the pipeline options.
    Full,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::SupervisedOnly => "supervised-only",
            TrainMode::DualposeBaseline => "dualpose-baseline",
            TrainMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub label_fraction: f64,
    pub seed: u64,
    pub unsup_weight: f64,
    /// PCK threshold reported in the history.
    pub pck_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 20.0, epochs: 12, batch: 8, label_fraction: 0.05, seed: 0, unsup_weight: 0.3, pck_alpha: 0.1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid!("lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            return Err(invalid!("batch must be at least 1"));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(invalid!("label_fraction must lie in (0, 1], got {}", self.label_fraction));
        }
        if !(self.unsup_weight >= 0.0) || !self.unsup_weight.is_finite() {
            return Err(invalid!("unsup_weight must be >= 0, got {}", self.unsup_weight));
        }
        if !(self.pck_alpha > 0.0) {
            return Err(invalid!("pck_alpha must be positive, got {}", self.pck_alpha));
        }
        Ok(())
    }

    /// Labeled count for a dataset of `n` scenes.
    pub fn labeled_count(&self, n: usize) -> usize {
        libm::floor(self.label_fraction * n as f64 + 1e-9) as usize
    }
}

/// One history row.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub supervised_loss: f64,
    pub unsupervised_loss: f64,
    /// Accepted joints over all joints of the unsupervised targets.
    pub accept_rate: f64,
    /// Share of accepted targets a student took from itself.
    pub self_rate: f64,
    /// Test metrics averaged over both students.
    pub pck: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Scenes for training plus a held-out test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SyntheticScene>,
    pub test: Vec<SyntheticScene>,
}

/// PCK and AP of one model on canonical test scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub pck: f64,
    pub ap: f64,
    pub per_joint_pck: Vec<f64>,
}

pub fn evaluate(m: &StudentModel, scenes: &[SyntheticScene], alpha: f64) -> Result<Evaluation> {
    if scenes.is_empty() {
        return Err(invalid!("evaluation needs at least one scene"));
    }
    let cfg = OksConfig::coco(m.joints);
    let mut hits = vec![0usize; m.joints];
    let mut seen = vec![0usize; m.joints];
    let mut oks_values = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let pred = predict(m, &scene.features)?.decode();
        let r = pck(&pred, &scene.keypoints, alpha, scene.bbox)?;
        for (j, c) in r.correct.iter().enumerate() {
            if let Some(c) = c {
                seen[j] += 1;
                hits[j] += *c as usize;
            }
        }
        if scene.keypoints.num_valid() > 0 {
            oks_values.push(oks(&pred, &scene.keypoints, scene.bbox.0 * scene.bbox.1, &cfg)?);
        }
    }
    let total: usize = seen.iter().sum();
    let per_joint_pck =
        hits.iter().zip(&seen).map(|(h, s)| if *s == 0 { 0.0 } else { *h as f64 / *s as f64 }).collect();
    Ok(Evaluation {
        pck: hits.iter().sum::<usize>() as f64 / total.max(1) as f64,
        ap: average_precision(&oks_values)?,
        per_joint_pck,
    })
}

/// Labeled/unlabeled split of `n` scenes.
pub fn split_indices(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let labeled = cfg.labeled_count(n);
    if labeled == 0 {
        return Err(Error::EmptyLabeledSet);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(cfg.seed, streams::SPLIT));
    let unlabeled = idx.split_off(labeled);
    Ok((idx, unlabeled))
}

struct Prepared {
    features: FeatureGrid,
    z: Vec<f64>,
    pred: HeatmapSet,
}

fn prepare(m: &StudentModel, scene: &SyntheticScene, t: &AffineTransform, rng: &mut StreamRng) -> Result<Prepared> {
    let features = scene.render_view(t, rng)?;
    let z = m.forward(&features)?;
    let pred = to_heatmaps(&z, m.joints, &features)?;
    Ok(Prepared { features, z, pred })
}

/// Pseudo-labels of one student for one unlabeled scene, plus the strong view it trains on.
struct Proposal {
    labels: PseudoLabelSet,
    train_view: Prepared,
    train_t: AffineTransform,
}

fn propose(
    m: &StudentModel,
    scene: &SyntheticScene,
    mode: TrainMode,
    opts: &PipelineOptions,
    aug: &Augmentation,
    rng: &mut StreamRng,
) -> Result<Proposal> {
    let dims = scene.dims();
    let weak = aug.weak.sample(rng, dims);
    let k = if mode == TrainMode::Full { opts.k } else { 0 };
    let strong: Vec<AffineTransform> = (0..k.max(1)).map(|_| aug.strong.sample(rng, dims)).collect();
    let mut predictions = Vec::with_capacity(k + 1);
    let weak_view = prepare(m, scene, &weak, rng)?;
    predictions.push((weak_view.pred.clone(), weak));
    let mut train_view = None;
    for (i, t) in strong.iter().enumerate() {
        let view = prepare(m, scene, t, rng)?;
        if i < k {
            predictions.push((view.pred.clone(), *t));
        }
        if i == 0 {
            train_view = Some(view);
        }
    }
    let aligned = AlignedViews::align(&predictions, dims)?;
    let pipeline = match mode {
        TrainMode::Full => *opts,
        _ => PipelineOptions { tau: 0.0, k: 0, refine: false, select: false, ..*opts },
    };
    let labels = build_pseudo_labels(&aligned, &pipeline)?;
    Ok(Proposal { labels, train_view: train_view.expect("at least one strong view"), train_t: strong[0] })
}

#[derive(Default)]
struct EpochTally {
    sup_loss: f64,
    sup_terms: usize,
    unsup_loss: f64,
    unsup_terms: usize,
    accepted: usize,
    joints: usize,
    from_self: usize,
}

/// Trains both students. `opts` configures the pseudo-label pipeline used in
/// [`TrainMode::Full`]; the other modes ignore it apart from `sigma_px`.
pub fn train_dual(
    data: &Dataset,
    cfg: &TrainConfig,
    opts: &PipelineOptions,
    mode: TrainMode,
) -> Result<(StudentModel, StudentModel, TrainHistory)> {
    train_dual_with(data, cfg, opts, mode, &Augmentation::default())
}

/// [`train_dual`] with explicit augmentation policies.
pub fn train_dual_with(
    data: &Dataset,
    cfg: &TrainConfig,
    opts: &PipelineOptions,
    mode: TrainMode,
    aug: &Augmentation,
) -> Result<(StudentModel, StudentModel, TrainHistory)> {
    cfg.validate()?;
    opts.validate()?;
    let first = data.train.first().ok_or(Error::EmptyLabeledSet)?;
    let (joints, channels) = (first.keypoints.len(), first.features.channels());
    let (labeled, unlabeled) = split_indices(data.train.len(), cfg)?;
    let use_unlabeled = mode != TrainMode::SupervisedOnly && cfg.unsup_weight > 0.0 && !unlabeled.is_empty();

    let mut init = rng::stream(cfg.seed, streams::INIT);
    let mut students = [
        StudentModel::initialized(StudentId::Theta, joints, channels, &mut init)?,
        StudentModel::initialized(StudentId::Xi, joints, channels, &mut init)?,
    ];
    let mut shuffle = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut labeled_aug =
        [rng::stream(cfg.seed, streams::LABELED_AUG), rng::stream(cfg.seed, streams::LABELED_AUG + 1)];
    let mut unlabeled_aug =
        [rng::stream(cfg.seed, streams::UNLABELED_AUG), rng::stream(cfg.seed, streams::UNLABELED_AUG + 1)];
    let mut history = TrainHistory::default();
    let mut lab_order = labeled.clone();
    let mut unl_order = unlabeled.clone();

    for epoch in 0..cfg.epochs {
        lab_order.shuffle(&mut shuffle);
        unl_order.shuffle(&mut shuffle);
        // Step count depends only on the split, so every mode sees the same number
        // of supervised updates.
        let steps = labeled.len().max(unlabeled.len()).div_ceil(cfg.batch);
        let mut tally = EpochTally::default();
        for step in 0..steps {
            let mut grads = [vec![0.0; students[0].weights.len()], vec![0.0; students[1].weights.len()]];
            let lab_batch: Vec<usize> =
                (0..cfg.batch).map(|i| lab_order[(step * cfg.batch + i) % lab_order.len()]).collect();
            for s in 0..2 {
                for &idx in &lab_batch {
                    let scene = &data.train[idx];
                    let t = aug.weak.sample(&mut labeled_aug[s], scene.dims());
                    let view = prepare(&students[s], scene, &t, &mut labeled_aug[s])?;
                    let target = scene.target_heatmaps(&t, opts.sigma_px)?;
                    let lg = supervised_loss(&view.pred, &target)?;
                    let g = students[s].backward(&view.features, &view.z, &lg.grad)?;
                    accumulate(&mut grads[s], &g, 1.0 / lab_batch.len() as f64);
                    tally.sup_loss += lg.loss;
                    tally.sup_terms += 1;
                }
            }
            if use_unlabeled {
                let unl_batch: Vec<usize> =
                    (0..cfg.batch).map(|i| unl_order[(step * cfg.batch + i) % unl_order.len()]).collect();
                for &idx in &unl_batch {
                    let scene = &data.train[idx];
                    let proposals = [
                        propose(&students[0], scene, mode, opts, aug, &mut unlabeled_aug[0])?,
                        propose(&students[1], scene, mode, opts, aug, &mut unlabeled_aug[1])?,
                    ];
                    for s in 0..2 {
                        let (own, other) = (&proposals[s], &proposals[1 - s]);
                        let chosen = if mode == TrainMode::Full && opts.select {
                            select_pseudo(&own.labels, &other.labels, opts.delta)?
                        } else {
                            relabel(&other.labels, Source::Other)
                        };
                        tally.joints += chosen.len();
                        tally.accepted += chosen.num_accepted();
                        tally.from_self +=
                            chosen.labels().iter().filter(|l| l.accepted && l.source == Source::SelfStudent).count();
                        let targets = chosen.in_view(&own.train_t, opts.sigma_px)?;
                        let lg = unsupervised_loss(&own.train_view.pred, &targets)?;
                        let g = students[s].backward(&own.train_view.features, &own.train_view.z, &lg.grad)?;
                        accumulate(&mut grads[s], &g, cfg.unsup_weight / unl_batch.len() as f64);
                        tally.unsup_loss += lg.loss;
                        tally.unsup_terms += 1;
                    }
                }
            }
            for s in 0..2 {
                students[s] = sgd_step(&students[s], &grads[s], cfg.lr)?;
            }
        }
        let evals =
            [evaluate(&students[0], &data.test, cfg.pck_alpha)?, evaluate(&students[1], &data.test, cfg.pck_alpha)?];
        history.records.push(EpochRecord {
            epoch,
            supervised_loss: ratio(tally.sup_loss, tally.sup_terms),
            unsupervised_loss: ratio(tally.unsup_loss, tally.unsup_terms),
            accept_rate: ratio(tally.accepted as f64, tally.joints),
            self_rate: ratio(tally.from_self as f64, tally.accepted),
            pck: 0.5 * (evals[0].pck + evals[1].pck),
            ap: 0.5 * (evals[0].ap + evals[1].ap),
        });
    }
    let [theta, xi] = students;
    Ok((theta, xi, history))
}

fn relabel(set: &PseudoLabelSet, source: Source) -> PseudoLabelSet {
    let labels = set.labels().iter().map(|l| crate::pseudo::PseudoLabel { source, ..l.clone() }).collect();
    PseudoLabelSet::new(labels).expect("relabeling keeps a valid set")
}

fn accumulate(acc: &mut [f64], g: &[f64], scale: f64) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

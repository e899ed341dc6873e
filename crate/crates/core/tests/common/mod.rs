//! Brute-force reference implementations and random instance generators shared
//! by the integration tests. Everything here is written with plain index loops
//! and no library helpers, so it can serve as an independent check.
#![allow(dead_code, clippy::needless_range_loop)]

use pseudoheat_core::learner::{supervised_loss, unsupervised_loss};
use pseudoheat_core::metrics::{oks, pck, OksConfig};
use pseudoheat_core::pseudo::{
    ensemble_avg, ensemble_max, joint_uncertainty, uncertainty_map, AlignedViews, PseudoLabel, PseudoLabelSet, Source,
};
use pseudoheat_core::{Dims, Heatmap, HeatmapSet, Keypoint, KeypointSet, ValidityMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Raw multi-view instance: `values[view][joint][y * w + x]`, `valid[view][pixel]`.
#[derive(Debug, Clone)]
pub struct RawViews {
    pub w: usize,
    pub h: usize,
    pub joints: usize,
    pub values: Vec<Vec<Vec<f64>>>,
    pub valid: Vec<Vec<bool>>,
}

impl RawViews {
    pub fn random<R: Rng>(rng: &mut R, max_views: usize) -> Self {
        let w = rng.random_range(1..=16);
        let h = rng.random_range(1..=16);
        let joints = rng.random_range(1..=4);
        let views = rng.random_range(1..=max_views);
        // Some instances get coarse values so exact ties are exercised too.
        let coarse = rng.random_bool(0.3);
        let p_valid = [1.0, 0.8, 0.5][rng.random_range(0..3)];
        let values = (0..views)
            .map(|_| {
                (0..joints)
                    .map(|_| {
                        (0..w * h)
                            .map(|_| {
                                let v: f64 = rng.random();
                                if coarse {
                                    (v * 4.0).floor() / 4.0
                                } else {
                                    v
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let valid = (0..views).map(|_| (0..w * h).map(|_| rng.random_bool(p_valid)).collect()).collect();
        Self { w, h, joints, values, valid }
    }

    pub fn aligned(&self) -> AlignedViews {
        let dims = Dims::new(self.w, self.h);
        let views = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(v, m)| {
                let set = HeatmapSet::new(v.iter().map(|g| Heatmap::new(dims, g.clone()).unwrap()).collect()).unwrap();
                (set, ValidityMask::from_bits(dims, m.clone()).unwrap())
            })
            .collect();
        AlignedViews::new(views).unwrap()
    }

    fn valid_values(&self, j: usize, p: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for v in 0..self.values.len() {
            if self.valid[v][p] {
                out.push(self.values[v][j][p]);
            }
        }
        out
    }
}

pub fn oracle_max(r: &RawViews) -> Vec<Vec<f64>> {
    (0..r.joints)
        .map(|j| {
            (0..r.w * r.h)
                .map(|p| {
                    let vs = r.valid_values(j, p);
                    let mut best = 0.0;
                    for (i, v) in vs.iter().enumerate() {
                        if i == 0 || *v > best {
                            best = *v;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}

pub fn oracle_avg(r: &RawViews) -> Vec<Vec<f64>> {
    (0..r.joints)
        .map(|j| {
            (0..r.w * r.h)
                .map(|p| {
                    let vs = r.valid_values(j, p);
                    if vs.is_empty() {
                        0.0
                    } else {
                        vs.iter().sum::<f64>() / vs.len() as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Population stdev via `E[x^2] - E[x]^2`, sentinel 1.0 below two valid views.
pub fn oracle_stdev(r: &RawViews) -> Vec<Vec<f64>> {
    (0..r.joints)
        .map(|j| {
            (0..r.w * r.h)
                .map(|p| {
                    let vs = r.valid_values(j, p);
                    if vs.len() < 2 {
                        return 1.0;
                    }
                    let n = vs.len() as f64;
                    let m1 = vs.iter().sum::<f64>() / n;
                    let m2 = vs.iter().map(|v| v * v).sum::<f64>() / n;
                    (m2 - m1 * m1).max(0.0).sqrt()
                })
                .collect()
        })
        .collect()
}

pub fn oracle_joint_uncertainty(grids: &[Vec<f64>]) -> Vec<f64> {
    grids.iter().map(|g| g.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn max_abs(a: &[Vec<f64>], b: impl Iterator<Item = Vec<f64>>) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.len(), y.len());
        for (u, v) in x.iter().zip(&y) {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

/// Largest deviation of the library from the oracles on one instance, per operation:
/// `[ensemble_max, ensemble_avg, uncertainty_map, joint_uncertainty]`.
pub fn pipeline_deviation(r: &RawViews) -> [f64; 4] {
    let av = r.aligned();
    let (mx, mask) = ensemble_max(&av).unwrap();
    let mut d_max = max_abs(&oracle_max(r), mx.joints().iter().map(|h| h.values().to_vec()));
    for p in 0..r.w * r.h {
        let seen = (0..r.valid.len()).any(|v| r.valid[v][p]);
        if mask.bits()[p] != seen {
            d_max = f64::INFINITY;
        }
    }
    let avg = ensemble_avg(&av).unwrap();
    let d_avg = max_abs(&oracle_avg(r), avg.joints().iter().map(|h| h.values().to_vec()));
    let um = uncertainty_map(&av);
    let sd = oracle_stdev(r);
    let d_sd = max_abs(&sd, (0..r.joints).map(|j| um.joint(j).to_vec()));
    let ju = joint_uncertainty(&um);
    let d_ju = oracle_joint_uncertainty(&sd).iter().zip(&ju).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    [d_max, d_avg, d_sd, d_ju]
}

/// Random prediction/target pair with a random acceptance pattern.
pub struct LossCase {
    pub pred: HeatmapSet,
    pub gt: HeatmapSet,
    pub accepted: Vec<bool>,
}

impl LossCase {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let dims = Dims::new(rng.random_range(1..=16), rng.random_range(1..=16));
        let joints = rng.random_range(1..=4);
        let grid = |rng: &mut R| Heatmap::new(dims, (0..dims.len()).map(|_| rng.random()).collect()).unwrap();
        let pred = HeatmapSet::new((0..joints).map(|_| grid(rng)).collect()).unwrap();
        let gt = HeatmapSet::new((0..joints).map(|_| grid(rng)).collect()).unwrap();
        let accepted = (0..joints).map(|_| rng.random_bool(0.6)).collect();
        Self { pred, gt, accepted }
    }

    pub fn labels(&self) -> PseudoLabelSet {
        let labels = self
            .gt
            .joints()
            .iter()
            .zip(&self.accepted)
            .map(|(h, &a)| PseudoLabel { accepted: a, ..PseudoLabel::raw(h.clone(), Source::Other) })
            .collect();
        PseudoLabelSet::new(labels).unwrap()
    }
}

/// Sum of squared differences over the selected joints divided by the number of
/// selected pixels; 0 when nothing is selected.
pub fn oracle_mse(pred: &HeatmapSet, gt: &HeatmapSet, keep: &[bool]) -> f64 {
    let dims = pred.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..pred.num_joints() {
        if !keep[j] {
            continue;
        }
        for y in 0..dims.height {
            for x in 0..dims.width {
                let d = pred.joint(j).get(x, y) - gt.joint(j).get(x, y);
                sum += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `[supervised, unsupervised]` loss deviations on one case.
pub fn loss_deviation(c: &LossCase) -> [f64; 2] {
    let all = vec![true; c.accepted.len()];
    let sup = supervised_loss(&c.pred, &c.gt).unwrap().loss;
    let unsup = unsupervised_loss(&c.pred, &c.labels()).unwrap().loss;
    [(sup - oracle_mse(&c.pred, &c.gt, &all)).abs(), (unsup - oracle_mse(&c.pred, &c.gt, &c.accepted)).abs()]
}

/// Random prediction and ground truth for one instance.
pub struct KeypointCase {
    pub pred: KeypointSet,
    pub gt: KeypointSet,
    pub bbox: (f64, f64),
    pub falloff: Vec<f64>,
    pub alpha: f64,
}

impl KeypointCase {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let joints = rng.random_range(1..=4);
        let mut gt = Vec::new();
        let mut pred = Vec::new();
        for j in 0..joints {
            let g = Keypoint::new(rng.random_range(0.0..16.0), rng.random_range(0.0..16.0), 1.0);
            // Joint 0 always has valid ground truth so OKS is defined.
            let g = if j > 0 && rng.random_bool(0.2) { Keypoint { valid: false, ..g } } else { g };
            let p = Keypoint::new(g.x + rng.random_range(-4.0..4.0), g.y + rng.random_range(-4.0..4.0), 1.0);
            let p = if rng.random_bool(0.15) { Keypoint { valid: false, ..p } } else { p };
            gt.push(g);
            pred.push(p);
        }
        Self {
            pred: KeypointSet::new(pred),
            gt: KeypointSet::new(gt),
            bbox: (rng.random_range(2.0..16.0), rng.random_range(2.0..16.0)),
            falloff: (0..joints).map(|_| rng.random_range(0.05..0.25)).collect(),
            alpha: rng.random_range(0.05..0.5),
        }
    }
}

pub fn oracle_oks(c: &KeypointCase) -> f64 {
    let s = c.bbox.0 * c.bbox.1;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..c.gt.len() {
        let g = c.gt.get(j);
        if !g.valid {
            continue;
        }
        den += 1.0;
        let p = c.pred.get(j);
        if p.valid {
            let d2 = (p.x - g.x).powi(2) + (p.y - g.y).powi(2);
            let k = c.falloff[j];
            num += (-d2 / (2.0 * s * k * k)).exp();
        }
    }
    num / den
}

pub fn oracle_pck(c: &KeypointCase) -> f64 {
    let l = if c.bbox.0 > c.bbox.1 { c.bbox.0 } else { c.bbox.1 };
    let (mut hit, mut n) = (0, 0);
    for j in 0..c.gt.len() {
        let (g, p) = (c.gt.get(j), c.pred.get(j));
        if !g.valid {
            continue;
        }
        n += 1;
        if p.valid && ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt() <= c.alpha * l {
            hit += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// `[oks, pck]` deviations on one case.
pub fn metric_deviation(c: &KeypointCase) -> [f64; 2] {
    let cfg = OksConfig::new(c.falloff.clone()).unwrap();
    let o = oks(&c.pred, &c.gt, c.bbox.0 * c.bbox.1, &cfg).unwrap();
    let p = pck(&c.pred, &c.gt, c.alpha, c.bbox).unwrap().fraction;
    [(o - oracle_oks(c)).abs(), (p - oracle_pck(c)).abs()]
}

/// Random single-scene model whose responses stay inside (0.1, 0.9), so no pixel
/// is near a clamp boundary.
pub struct GradCase {
    pub model: pseudoheat_core::learner::StudentModel,
    pub features: pseudoheat_core::synth::FeatureGrid,
    pub case: LossCase,
}

impl GradCase {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        use pseudoheat_core::learner::{StudentId, StudentModel};
        use pseudoheat_core::synth::FeatureGrid;
        let case = LossCase::random(rng);
        let dims = case.pred.dims();
        let joints = case.pred.num_joints();
        let channels = rng.random_range(1..=4);
        let features =
            FeatureGrid::from_data(dims, channels, (0..channels * dims.len()).map(|_| rng.random()).collect()).unwrap();
        let weights = (0..joints)
            .flat_map(|_| {
                let mut row: Vec<f64> = (0..channels).map(|_| rng.random_range(-0.1..0.1)).collect();
                row.push(0.5);
                row
            })
            .collect();
        let model = StudentModel::from_weights(StudentId::Theta, joints, channels, weights).unwrap();
        Self { model, features, case }
    }

    fn losses(&self, m: &pseudoheat_core::learner::StudentModel) -> [f64; 2] {
        let pred = pseudoheat_core::learner::predict(m, &self.features).unwrap();
        [
            supervised_loss(&pred, &self.case.gt).unwrap().loss,
            unsupervised_loss(&pred, &self.case.labels()).unwrap().loss,
        ]
    }

    /// Relative error `|g - n| / (|g| + |n|)` between the analytic weight gradient
    /// and central differences with step `h`, for `[supervised, unsupervised]`.
    pub fn relative_errors(&self, h: f64) -> [f64; 2] {
        use pseudoheat_core::learner::StudentModel;
        let z = self.model.forward(&self.features).unwrap();
        let pred = pseudoheat_core::learner::predict(&self.model, &self.features).unwrap();
        let grads = [
            supervised_loss(&pred, &self.case.gt).unwrap().grad,
            unsupervised_loss(&pred, &self.case.labels()).unwrap().grad,
        ];
        let analytic: Vec<Vec<f64>> =
            grads.iter().map(|g| self.model.backward(&self.features, &z, g).unwrap()).collect();
        let mut numeric = vec![vec![0.0; self.model.weights().len()]; 2];
        for i in 0..self.model.weights().len() {
            let shifted = |s: f64| {
                let mut w = self.model.weights().to_vec();
                w[i] += s;
                StudentModel::from_weights(self.model.id, self.model.joints(), self.model.channels(), w).unwrap()
            };
            let (up, down) = (self.losses(&shifted(h)), self.losses(&shifted(-h)));
            for k in 0..2 {
                numeric[k][i] = (up[k] - down[k]) / (2.0 * h);
            }
        }
        let mut out = [0.0; 2];
        for k in 0..2 {
            let diff: f64 = analytic[k].iter().zip(&numeric[k]).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
            let scale: f64 = analytic[k].iter().map(|a| a * a).sum::<f64>().sqrt()
                + numeric[k].iter().map(|n| n * n).sum::<f64>().sqrt();
            out[k] = if scale == 0.0 { 0.0 } else { diff / scale };
        }
        out
    }
}

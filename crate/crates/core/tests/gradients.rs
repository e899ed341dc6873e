mod common;

use common::*;
use pseudoheat_core::learner::{predict, sgd_step, supervised_loss, unsupervised_loss, StudentId, StudentModel};
use pseudoheat_core::pseudo::{PseudoLabel, PseudoLabelSet, Source};
use pseudoheat_core::synth::FeatureGrid;
use pseudoheat_core::{Dims, Heatmap, HeatmapSet};

#[test]
fn weight_gradients_match_central_differences() {
    let mut rng = rng(21);
    for _ in 0..50 {
        let g = GradCase::random(&mut rng);
        let e = g.relative_errors(1e-4);
        assert!(e[0] < 1e-4 && e[1] < 1e-4, "{e:?}");
    }
}

#[test]
fn clamped_pixels_pass_no_gradient() {
    let dims = Dims::new(4, 4);
    let features = FeatureGrid::from_data(dims, 1, vec![1.0; 16]).unwrap();
    // Responses of 3.0 clamp to 1.0.
    let m = StudentModel::from_weights(StudentId::Xi, 1, 1, vec![2.0, 1.0]).unwrap();
    let pred = predict(&m, &features).unwrap();
    assert!(pred.joint(0).values().iter().all(|v| *v == 1.0));
    let gt = HeatmapSet::zeros(1, dims).unwrap();
    let lg = supervised_loss(&pred, &gt).unwrap();
    let z = m.forward(&features).unwrap();
    assert!(m.backward(&features, &z, &lg.grad).unwrap().iter().all(|g| *g == 0.0));
}

#[test]
fn loss_examples() {
    let dims = Dims::new(5, 3);
    let gt = HeatmapSet::new(vec![Heatmap::new(dims, vec![0.4; 15]).unwrap(); 2]).unwrap();
    let pred = HeatmapSet::new(vec![Heatmap::new(dims, vec![0.5; 15]).unwrap(); 2]).unwrap();
    assert_eq!(supervised_loss(&gt, &gt).unwrap().loss, 0.0);
    assert!((supervised_loss(&pred, &gt).unwrap().loss - 0.01).abs() < 1e-12);

    let rejected = PseudoLabelSet::new(
        gt.joints()
            .iter()
            .map(|h| PseudoLabel { accepted: false, ..PseudoLabel::raw(h.clone(), Source::Other) })
            .collect(),
    )
    .unwrap();
    let lg = unsupervised_loss(&pred, &rejected).unwrap();
    assert_eq!(lg.loss, 0.0);
    assert!(lg.grad.iter().all(|g| *g == 0.0));
    let other = HeatmapSet::new(vec![Heatmap::zeros(Dims::new(2, 2)).unwrap()]).unwrap();
    assert!(supervised_loss(&pred, &other).is_err());
}

#[test]
fn partial_acceptance_renormalizes() {
    let mut rng = rng(22);
    for _ in 0..50 {
        let mut c = LossCase::random(&mut rng);
        let j = c.accepted.len();
        c.accepted = (0..j).map(|k| k % 2 == 0).collect();
        let got = unsupervised_loss(&c.pred, &c.labels()).unwrap().loss;
        assert!((got - oracle_mse(&c.pred, &c.gt, &c.accepted)).abs() < 1e-12);
    }
}

#[test]
fn sgd_examples() {
    let m = StudentModel::from_weights(StudentId::Theta, 1, 2, vec![0.3, -0.2, 0.1]).unwrap();
    assert_eq!(sgd_step(&m, &[0.0; 3], 0.5).unwrap(), m);
    let zero = sgd_step(&m, m.weights(), 1.0).unwrap();
    assert!(zero.weights().iter().all(|w| *w == 0.0));
    assert!(sgd_step(&m, &[f64::NAN, 0.0, 0.0], 0.1).is_err());
    assert!(sgd_step(&m, &[0.0; 3], 0.0).is_err());
}

#[test]
fn small_step_reduces_loss() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let g = GradCase::random(&mut rng);
        let pred = predict(&g.model, &g.features).unwrap();
        let lg = supervised_loss(&pred, &g.case.gt).unwrap();
        let z = g.model.forward(&g.features).unwrap();
        let grad = g.model.backward(&g.features, &z, &lg.grad).unwrap();
        if grad.iter().all(|v| *v == 0.0) {
            continue;
        }
        let next = sgd_step(&g.model, &grad, 1e-3).unwrap();
        let after = supervised_loss(&predict(&next, &g.features).unwrap(), &g.case.gt).unwrap().loss;
        assert!(after < lg.loss);
    }
}

#[test]
fn prediction_examples() {
    let dims = Dims::new(3, 3);
    let features = FeatureGrid::from_data(dims, 2, (0..18).map(|i| i as f64 / 18.0).collect()).unwrap();
    let m = StudentModel::from_weights(StudentId::Theta, 1, 2, vec![0.0, 0.0, 0.5]).unwrap();
    assert!(predict(&m, &features).unwrap().joint(0).values().iter().all(|v| *v == 0.5));
    let wrong = FeatureGrid::from_data(dims, 3, vec![0.0; 27]).unwrap();
    assert!(predict(&m, &wrong).is_err());
}

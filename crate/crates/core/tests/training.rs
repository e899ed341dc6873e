use pseudoheat_core::learner::{
    evaluate, predict, sgd_step, supervised_loss, train_dual, Dataset, StudentId, StudentModel, TrainConfig, TrainMode,
};
use pseudoheat_core::pseudo::PipelineOptions;
use pseudoheat_core::rng::stream;
use pseudoheat_core::sample_weak;
use pseudoheat_core::synth::{generate_dataset, SceneConfig, SyntheticScene};
use pseudoheat_core::HeatmapSet;

fn small_data(n: usize) -> Dataset {
    let cfg = SceneConfig::default();
    Dataset { train: generate_dataset(&cfg, 1, n).unwrap(), test: generate_dataset(&cfg, 2, 10).unwrap() }
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 2, label_fraction: 0.25, seed, ..TrainConfig::default() }
}

#[test]
fn zero_unsupervised_weight_reduces_to_supervised_only() {
    let data = small_data(12);
    let cfg = TrainConfig { unsup_weight: 0.0, ..quick(4) };
    let opts = PipelineOptions::default();
    let full = train_dual(&data, &cfg, &opts, TrainMode::Full).unwrap();
    let sup = train_dual(&data, &cfg, &opts, TrainMode::SupervisedOnly).unwrap();
    assert_eq!(full, sup);
}

#[test]
fn training_is_deterministic() {
    let data = small_data(12);
    let opts = PipelineOptions::default();
    for mode in [TrainMode::DualposeBaseline, TrainMode::Full] {
        let a = train_dual(&data, &quick(8), &opts, mode).unwrap();
        let b = train_dual(&data, &quick(8), &opts, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.2.records.len(), 2);
        assert!(a.2.records.iter().all(|r| r.supervised_loss >= 0.0 && r.unsupervised_loss >= 0.0));
        let c = train_dual(&data, &quick(9), &opts, mode).unwrap();
        assert_ne!(a.2, c.2);
    }
}

#[test]
fn too_few_labels_is_an_error() {
    let data = small_data(4);
    let cfg = TrainConfig { label_fraction: 0.1, ..quick(0) };
    assert!(train_dual(&data, &cfg, &PipelineOptions::default(), TrainMode::Full).is_err());
}

#[test]
fn supervised_loss_does_not_increase_on_its_batch() {
    let scene = SceneConfig::default();
    let scenes = generate_dataset(&scene, 3, 8).unwrap();
    let mut r = stream(5, 0);
    let batch: Vec<_> = scenes
        .iter()
        .map(|s| {
            let t = sample_weak(&mut r, s.dims());
            (s.render_view(&t, &mut r).unwrap(), s.target_heatmaps(&t, 2.0).unwrap())
        })
        .collect();
    let mut m = StudentModel::initialized(StudentId::Theta, scene.joints, scene.channels, &mut stream(5, 1)).unwrap();
    let batch_loss = |m: &StudentModel| -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; m.weights().len()];
        let mut loss = 0.0;
        for (f, target) in &batch {
            let z = m.forward(f).unwrap();
            let lg = supervised_loss(&predict(m, f).unwrap(), target).unwrap();
            for (g, v) in grad.iter_mut().zip(m.backward(f, &z, &lg.grad).unwrap()) {
                *g += v / batch.len() as f64;
            }
            loss += lg.loss / batch.len() as f64;
        }
        (loss, grad)
    };
    let (mut last, mut grad) = batch_loss(&m);
    for _ in 0..25 {
        m = sgd_step(&m, &grad, 1e-3).unwrap();
        let (loss, g) = batch_loss(&m);
        assert!(loss <= last, "{loss} > {last}");
        last = loss;
        grad = g;
    }
}

// Ordinary least squares for one joint over every pixel of `scenes`: normal
// equations solved by Gauss-Jordan elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn least_squares(scenes: &[SyntheticScene], targets: &[HeatmapSet], j: usize) -> Vec<f64> {
    let c = scenes[0].features.channels();
    let n = c + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (s, t) in scenes.iter().zip(targets) {
        let y = t.joint(j).values();
        for (p, &yp) in y.iter().enumerate() {
            let mut x: Vec<f64> = (0..c).map(|ch| s.features.channel(ch)[p]).collect();
            x.push(1.0);
            for r in 0..n {
                for k in 0..n {
                    a[r][k] += x[r] * x[k];
                }
                a[r][n] += x[r] * yp;
            }
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..=n {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|r| a[r][n] / a[r][r]).collect()
}

fn least_squares_model(scenes: &[SyntheticScene], joints: usize) -> StudentModel {
    let targets: Vec<HeatmapSet> =
        scenes.iter().map(|s| s.target_heatmaps(&Default::default(), 2.0).unwrap()).collect();
    let weights = (0..joints).flat_map(|j| least_squares(scenes, &targets, j)).collect();
    StudentModel::from_weights(StudentId::Theta, joints, scenes[0].features.channels(), weights).unwrap()
}

#[test]
fn least_squares_fit_on_one_scene_finds_the_joints() {
    // Occluded joints have no evidence in the features and are not counted.
    let cfg = SceneConfig { clutter_rate: 0.0, ..SceneConfig::default() };
    let (mut near, mut visible) = (0, 0);
    for seed in 0..10 {
        let scenes = generate_dataset(&cfg, seed, 1).unwrap();
        let m = least_squares_model(&scenes, cfg.joints);
        let decoded = predict(&m, &scenes[0].features).unwrap().decode();
        let gt = scenes[0].keypoints.points();
        visible += gt.iter().filter(|g| g.valid).count();
        near += decoded.points().iter().zip(gt).filter(|(p, g)| g.valid && p.distance(g) <= 3.0).count();
    }
    assert!(near as f64 >= 0.8 * visible as f64, "{near} of {visible} joints near ground truth");
}

#[test]
fn fully_labeled_training_approaches_least_squares() {
    let cfg = SceneConfig::default();
    let data =
        Dataset { train: generate_dataset(&cfg, 11, 40).unwrap(), test: generate_dataset(&cfg, 12, 60).unwrap() };
    let ls = evaluate(&least_squares_model(&data.train, cfg.joints), &data.test, 0.1).unwrap().pck;
    let tc = TrainConfig { label_fraction: 1.0, ..TrainConfig::default() };
    let (theta, _, _) = train_dual(&data, &tc, &PipelineOptions::default(), TrainMode::SupervisedOnly).unwrap();
    let sgd = evaluate(&theta, &data.test, 0.1).unwrap().pck;
    assert!((sgd - ls).abs() <= 0.10, "sgd {sgd} vs least squares {ls}");
}

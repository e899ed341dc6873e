//! One PASS/FAIL line per acceptance criterion. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 4`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use pseudoheat::config::ExperimentConfig;
use pseudoheat::run::train_runs;
use pseudoheat_core::learner::TrainMode;
use pseudoheat_core::metrics::{average_precision, oks, pck, OksConfig};
use pseudoheat_core::pseudo::{Aggregate, PipelineOptions};
use pseudoheat_core::simulate::{run_simulation, Selection, SimulationSetup};
use pseudoheat_core::synth::{NoiseProfile, SceneConfig};
use pseudoheat_core::{Keypoint, KeypointSet};

// Regression pins, measured once with the Monte Carlo at its default seed.
const MAX_MARGIN: f64 = 0.578;
const MARGIN_BAND: f64 = 0.05;
const BETTER_RATE: f64 = 0.711;
const GUIDED_GAP: f64 = 0.112;
const RATE_BAND: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1_oracles() -> Verdict {
    let mut rng = rng(101);
    let mut worst = [0.0f64; 8];
    for _ in 0..200 {
        let d = pipeline_deviation(&RawViews::random(&mut rng, 5));
        let l = loss_deviation(&LossCase::random(&mut rng));
        let m = metric_deviation(&KeypointCase::random(&mut rng));
        for (w, v) in worst.iter_mut().zip(d.iter().chain(&l).chain(&m)) {
            *w = w.max(*v);
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    verdict(max < 1e-6, format!("200 instances per function, worst deviation {max:.2e}"))
}

fn c2_gradients() -> Verdict {
    let mut rng = rng(102);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        for e in GradCase::random(&mut rng).relative_errors(1e-4) {
            worst = worst.max(e);
        }
    }
    verdict(worst < 1e-4, format!("50 instances, worst relative error {worst:.2e}"))
}

fn simulation(theta: NoiseProfile, xi: NoiseProfile) -> pseudoheat_core::simulate::SimulationSummary {
    let setup = SimulationSetup { theta, xi, ..SimulationSetup::default() };
    run_simulation(&SceneConfig::default(), &setup, &PipelineOptions::default()).expect("simulation runs")
}

fn own_error(s: &pseudoheat_core::simulate::SimulationSummary, views: usize, a: Aggregate) -> f64 {
    s.variant(views, a, Selection::Own).expect("variant present").mean_error
}

fn c3_denoising() -> Verdict {
    let s = simulation(NoiseProfile::default(), NoiseProfile::default());
    let (one, max) = (own_error(&s, 1, Aggregate::Max), own_error(&s, 5, Aggregate::Max));
    let margin = 1.0 - max / one;
    verdict(
        margin >= 0.15 && (margin - MAX_MARGIN).abs() <= MARGIN_BAND,
        format!(
            "1 view {one:.3} px, 5-view max {max:.3} px, margin {:.1}% (pinned {:.1} +/- 5)",
            margin * 100.0,
            MAX_MARGIN * 100.0
        ),
    )
}

fn c4_max_vs_avg() -> Verdict {
    let s = simulation(NoiseProfile::default(), NoiseProfile::default());
    let (max, avg) = (own_error(&s, 5, Aggregate::Max), own_error(&s, 5, Aggregate::Avg));
    verdict(max < avg, format!("5-view max {max:.3} px, avg {avg:.3} px"))
}

fn c5_selection() -> Verdict {
    let theta = NoiseProfile { jitter_sigma: 1.0, ..NoiseProfile::default() };
    let xi = NoiseProfile { jitter_sigma: 4.0, ..NoiseProfile::default() };
    let s = simulation(theta, xi);
    let sel = s.selection_for(Aggregate::Max).expect("max decisions");
    let pck = |sl| s.variant(5, Aggregate::Max, sl).expect("variant present").pck;
    let (guided, other) = (pck(Selection::Guided), pck(Selection::Other));
    let gap = guided - other;
    let pass = sel.better_rate > 0.6
        && gap > 0.0
        && (sel.better_rate - BETTER_RATE).abs() <= RATE_BAND
        && (gap - GUIDED_GAP).abs() <= RATE_BAND;
    verdict(
        pass,
        format!(
            "{} decisions, lower-error pick {:.3} (pinned {BETTER_RATE}), PCK guided {guided:.3} vs always-other {other:.3}",
            sel.decisions, sel.better_rate
        ),
    )
}

/// Final test PCK, averaged over 5 seeds, of each training variant.
struct Ablation {
    pck: BTreeMap<&'static str, f64>,
    spent: BTreeMap<&'static str, Duration>,
}

impl Ablation {
    fn run(&mut self, name: &'static str) -> f64 {
        if let Some(v) = self.pck.get(name) {
            return *v;
        }
        let full = PipelineOptions::default();
        let (mode, pipeline) = match name {
            "supervised-only" => (TrainMode::SupervisedOnly, full),
            "dualpose-baseline" => (TrainMode::DualposeBaseline, full),
            "multi-view-max" => (TrainMode::Full, PipelineOptions { tau: 0.0, refine: false, select: false, ..full }),
            "full" => (TrainMode::Full, full),
            "tau-0" => (TrainMode::Full, PipelineOptions { tau: 0.0, ..full }),
            "tau-0.3" => (TrainMode::Full, PipelineOptions { tau: 0.3, ..full }),
            "no-refine" => (TrainMode::Full, PipelineOptions { refine: false, ..full }),
            _ => unreachable!(),
        };
        let mut cfg = ExperimentConfig { pipeline, ..ExperimentConfig::default() };
        cfg.train.seeds = 5;
        cfg.train.modes = vec![mode];
        let start = Instant::now();
        let runs = train_runs(&cfg).expect("training runs");
        self.spent.insert(name, start.elapsed());
        let v = runs.iter().map(|r| r.final_record().pck).sum::<f64>() / runs.len() as f64;
        self.pck.insert(name, v);
        v
    }

    fn time(&self, names: &[&str]) -> Duration {
        names.iter().filter_map(|n| self.spent.get(n)).sum()
    }
}

const ORDER: [&str; 4] = ["supervised-only", "dualpose-baseline", "multi-view-max", "full"];
const SWEEP: [&str; 4] = ["full", "tau-0", "tau-0.3", "no-refine"];

fn c6_ablation(a: &mut Ablation) -> (Verdict, Duration) {
    let v: Vec<f64> = ORDER.iter().map(|n| a.run(n)).collect();
    let pass = v.windows(2).all(|w| w[1] > w[0]);
    let detail = ORDER.iter().zip(&v).map(|(n, p)| format!("{n} {p:.4}")).collect::<Vec<_>>().join(" < ");
    (verdict(pass, detail), a.time(&ORDER))
}

fn c7_threshold(a: &mut Ablation) -> (Verdict, Duration) {
    let [full, t0, t3, norefine] = SWEEP.map(|n| a.run(n));
    let pass = full > t0 && full > t3 && full > norefine;
    let detail = format!("tau 0.1 {full:.4}, tau 0 {t0:.4}, tau 0.3 {t3:.4}, tau 0.1 without refine {norefine:.4}");
    (verdict(pass, detail), a.time(&SWEEP))
}

fn c8_closed_forms() -> Verdict {
    let k = 0.079 * 2.0;
    let scale: f64 = 900.0;
    let gt = KeypointSet::new(vec![Keypoint::new(20.0, 20.0, 1.0)]);
    let moved = KeypointSet::new(vec![Keypoint::new(20.0, 20.0 + scale.sqrt() * k, 1.0)]);
    let o = oks(&moved, &gt, scale, &OksConfig::new(vec![k]).expect("sigma")).expect("oks");
    let ap = average_precision(&[0.72; 10]).expect("ap");
    let edge = KeypointSet::new(vec![Keypoint::new(23.0, 24.0, 1.0)]);
    let inclusive = pck(&edge, &gt, 0.1, (50.0, 40.0)).expect("pck").fraction;
    let pass = (o - (-0.5f64).exp()).abs() <= 1e-9 && ap == 0.5 && inclusive == 1.0;
    verdict(pass, format!("OKS {o:.12}, AP {ap}, PCK at d = alpha*l {inclusive}"))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pseudoheat")).args(args).output().expect("binary runs")
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).expect("inside").to_path_buf(), fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

const SMALL: &str = r#"
seed = 3
[data]
train_scenes = 12
test_scenes = 6
label_fraction = 0.25
[train]
epochs = 2
seeds = 2
[simulate]
trials = 40
"#;

/// Runs every subcommand twice into separate directories.
fn c9_determinism() -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = tmp.path().join("small.toml");
    fs::write(&config, SMALL).expect("config written");
    let c = config.to_str().expect("utf-8 path");
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    let mut trees = Vec::new();
    for round in ["a", "b"] {
        let root = tmp.path().join(round);
        let r = |sub: &str| root.join(sub).to_str().expect("utf-8 path").to_string();
        let steps: Vec<(&str, Vec<String>)> = vec![
            ("simulate", vec!["simulate".into(), "--config".into(), c.into(), "--out".into(), r("simulate")]),
            ("train", vec!["train".into(), "--config".into(), c.into(), "--out".into(), r("train")]),
            ("export", vec!["export".into(), "--config".into(), c.into(), "--out".into(), r("export")]),
        ];
        for (name, args) in &steps {
            let out = cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
            if !out.status.success() {
                failed.push(format!("{name}: {}", String::from_utf8_lossy(&out.stderr).trim()));
            }
        }
        // Ground-truth heatmaps stand in for predictions.
        let pred = root.join("pred");
        fs::create_dir_all(&pred).expect("pred dir");
        if let Ok(entries) = fs::read_dir(root.join("export")) {
            for e in entries.flatten() {
                let name = e.file_name().to_string_lossy().to_string();
                if let Some(id) = name.strip_suffix(".gt.phm") {
                    fs::copy(e.path(), pred.join(format!("{id}.phm"))).expect("copy");
                }
            }
        }
        let tail: Vec<(&str, Vec<String>)> = vec![
            (
                "eval",
                vec![
                    "eval".into(),
                    "--pred".into(),
                    r("pred"),
                    "--gt".into(),
                    r("export/index.json"),
                    "--out".into(),
                    r("eval"),
                ],
            ),
            (
                "render",
                vec![
                    "render".into(),
                    "--in".into(),
                    r("export/scene_00000.gt.phm"),
                    "--out".into(),
                    r("render/scene.svg"),
                ],
            ),
        ];
        for (name, args) in &tail {
            let out = cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
            if !out.status.success() {
                failed.push(format!("{name}: {}", String::from_utf8_lossy(&out.stderr).trim()));
            }
        }
        trees.push(snapshot(&root));
    }
    let (a, b) = (&trees[0], &trees[1]);
    for (path, bytes) in a {
        if b.get(path) != Some(bytes) {
            differing.push(path.display().to_string());
        }
    }
    for path in b.keys().filter(|p| !a.contains_key(*p)) {
        differing.push(path.display().to_string());
    }
    let pass = failed.is_empty() && differing.is_empty() && a.len() > 10;
    let detail = if !failed.is_empty() {
        format!("failed: {}", failed.join("; "))
    } else if !differing.is_empty() {
        format!("differing files: {}", differing.join(", "))
    } else {
        format!("5 subcommands, {} files identical", a.len())
    };
    verdict(pass, detail)
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut ablation = Ablation { pck: BTreeMap::new(), spent: BTreeMap::new() };
    let mut all = true;
    let mut line = |n: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> (Verdict, Duration)| {
        let (v, took) = f();
        let pass = v.pass && took < limit;
        all &= pass;
        println!(
            "criterion {n} {}: {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let timed = |f: fn() -> Verdict| {
        move || {
            let start = Instant::now();
            let v = f();
            (v, start.elapsed())
        }
    };
    let secs = Duration::from_secs;
    if run(1) {
        line(1, "oracle equivalence", secs(10), &mut timed(c1_oracles));
    }
    if run(2) {
        line(2, "gradient check", secs(10), &mut timed(c2_gradients));
    }
    if run(3) {
        line(3, "max ensemble denoises", secs(60), &mut timed(c3_denoising));
    }
    if run(4) {
        line(4, "max beats avg", secs(60), &mut timed(c4_max_vs_avg));
    }
    if run(5) {
        line(5, "uncertainty-guided selection", secs(60), &mut timed(c5_selection));
    }
    if run(6) {
        line(6, "ablation ordering", secs(600), &mut || c6_ablation(&mut ablation));
    }
    if run(7) {
        line(7, "threshold sweep", secs(600), &mut || c7_threshold(&mut ablation));
    }
    if run(8) {
        line(8, "metric closed forms", secs(1), &mut timed(c8_closed_forms));
    }
    if run(9) {
        line(9, "deterministic CLI output", secs(120), &mut timed(c9_determinism));
    }
    if !all {
        std::process::exit(1);
    }
}

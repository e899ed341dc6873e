//! Experiment drivers behind the CLI subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pseudoheat_core::learner::{evaluate, train_dual_with, Dataset, EpochRecord, StudentModel, TrainMode};
use pseudoheat_core::metrics::{average_precision, oks, pck, OksConfig};
use pseudoheat_core::pseudo::Aggregate;
use pseudoheat_core::rng::derive_seed;
use pseudoheat_core::simulate::{simulate_trial, summarize, Selection, SimulationSummary};
use pseudoheat_core::synth::generate_dataset;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::dataset::{export_dataset, write_json, DatasetIndex};
use crate::error::{Error, Result};
use crate::format::{read_heatmaps, write_model};
use crate::plot::{heatmap_svg, LineChart, Series};

const TRAIN_DATA_SALT: u64 = 0x74_7261_696e;
const TEST_DATA_SALT: u64 = 0x7465_7374;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_row<T: Serialize>(w: &mut csv::Writer<fs::File>, path: &Path, row: T) -> Result<()> {
    w.serialize(row).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize)]
pub struct VariantRow {
    pub schema_version: u32,
    pub views: usize,
    pub aggregate: Aggregate,
    pub selection: Selection,
    pub mean_error: f64,
    pub pck: f64,
    pub accept_rate: f64,
    pub joints: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub aggregate: Aggregate,
    pub decisions: usize,
    pub self_rate: f64,
    pub better_rate: f64,
    pub ties: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub seed: u64,
    pub trials: usize,
    pub views: usize,
    pub variants: Vec<VariantRow>,
    pub selection: Vec<SelectionRow>,
}

/// Runs every trial in the worker pool; results are folded in trial order.
pub fn simulate_summary(cfg: &ExperimentConfig) -> Result<SimulationSummary> {
    let scene = cfg.data.scene();
    let setup = cfg.simulation();
    let aug = cfg.augment.build()?;
    let outcomes = (0..setup.trials)
        .into_par_iter()
        .map(|t| simulate_trial(t, &scene, &setup, &cfg.pipeline, &aug))
        .collect::<pseudoheat_core::Result<Vec<_>>>()?;
    Ok(summarize(&outcomes)?)
}

pub fn simulate_report(cfg: &ExperimentConfig, summary: &SimulationSummary) -> SimulateReport {
    SimulateReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        trials: cfg.simulate.trials,
        views: cfg.pipeline.k + 1,
        variants: summary
            .variants
            .iter()
            .map(|v| VariantRow {
                schema_version: SCHEMA_VERSION,
                views: v.key.views,
                aggregate: v.key.aggregate,
                selection: v.key.selection,
                mean_error: v.mean_error,
                pck: v.pck,
                accept_rate: v.accept_rate,
                joints: v.joints,
            })
            .collect(),
        selection: summary
            .selection
            .iter()
            .map(|s| SelectionRow {
                aggregate: s.aggregate,
                decisions: s.decisions,
                self_rate: s.self_rate,
                better_rate: s.better_rate,
                ties: s.ties,
            })
            .collect(),
    }
}

/// Metric against view count, one series per aggregate and selection.
pub fn views_chart(report: &SimulateReport, metric: &str) -> Result<LineChart> {
    let mut series: BTreeMap<(Aggregate, Selection), Vec<(f64, f64)>> = BTreeMap::new();
    for v in &report.variants {
        let y = match metric {
            "mean_error" => v.mean_error,
            "pck" => v.pck,
            other => return Err(Error::Usage(format!("unknown chart metric {other}"))),
        };
        series.entry((v.aggregate, v.selection)).or_default().push((v.views as f64, y));
    }
    if series.len() < 2 {
        return Err(Error::Usage("a views chart needs at least two variants".into()));
    }
    Ok(LineChart {
        title: format!("pseudo-label {metric} vs views"),
        x_label: "views".into(),
        y_label: metric.into(),
        series: series
            .into_iter()
            .map(|((a, s), points)| Series { name: format!("{}-{}", a.name(), s.name()), points })
            .collect(),
    })
}

pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateReport> {
    let summary = simulate_summary(cfg)?;
    let report = simulate_report(cfg, &summary);
    create_dir(out)?;
    let csv_path = out.join("variants.csv");
    let mut w = csv_writer(&csv_path)?;
    for row in &report.variants {
        csv_row(&mut w, &csv_path, row)?;
    }
    csv_finish(w, &csv_path)?;
    write_json(&out.join("summary.json"), &report)?;
    write_text(&out.join("error_vs_views.svg"), &views_chart(&report, "mean_error")?.to_svg()?)?;
    write_text(&out.join("pck_vs_views.svg"), &views_chart(&report, "pck")?.to_svg()?)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// train

/// Train and test scenes of run `run`. The test set is shared by every run.
pub fn benchmark_data(cfg: &ExperimentConfig, run: usize) -> Result<Dataset> {
    let scene = cfg.data.scene();
    let run_seed = cfg.train_config(run).seed;
    Ok(Dataset {
        train: generate_dataset(&scene, derive_seed(run_seed, TRAIN_DATA_SALT), cfg.data.train_scenes)?,
        test: generate_dataset(&scene, derive_seed(cfg.seed, TEST_DATA_SALT), cfg.data.test_scenes)?,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: TrainMode,
    pub run: usize,
    pub seed: u64,
    pub theta: StudentModel,
    pub xi: StudentModel,
    pub history: Vec<EpochRecord>,
    pub per_joint_pck: Vec<f64>,
}

impl RunResult {
    pub fn final_record(&self) -> &EpochRecord {
        self.history.last().expect("at least one epoch")
    }
}

/// Every configured (mode, run) pair, in that order.
pub fn train_runs(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let aug = cfg.augment.build()?;
    let data: Vec<Dataset> = (0..cfg.train.seeds).map(|r| benchmark_data(cfg, r)).collect::<Result<_>>()?;
    let jobs: Vec<(TrainMode, usize)> =
        cfg.train.modes.iter().flat_map(|&m| (0..cfg.train.seeds).map(move |r| (m, r))).collect();
    jobs.into_par_iter()
        .map(|(mode, run)| {
            let tc = cfg.train_config(run);
            let (theta, xi, history) = train_dual_with(&data[run], &tc, &cfg.pipeline, mode, &aug)?;
            let a = evaluate(&theta, &data[run].test, tc.pck_alpha)?;
            let b = evaluate(&xi, &data[run].test, tc.pck_alpha)?;
            let per_joint_pck = a.per_joint_pck.iter().zip(&b.per_joint_pck).map(|(x, y)| 0.5 * (x + y)).collect();
            Ok(RunResult { mode, run, seed: tc.seed, theta, xi, history: history.records, per_joint_pck })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryRow {
    pub schema_version: u32,
    pub mode: TrainMode,
    pub run: usize,
    pub seed: u64,
    pub epoch: usize,
    pub supervised_loss: f64,
    pub unsupervised_loss: f64,
    pub accept_rate: f64,
    pub self_rate: f64,
    pub pck: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub pck: f64,
    pub ap: f64,
    pub per_joint_pck: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub mode: TrainMode,
    pub mean_pck: f64,
    pub mean_ap: f64,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub seed: u64,
    pub label_fraction: f64,
    pub pck_alpha: f64,
    pub modes: Vec<ModeSummary>,
    /// Final mean PCK of each non-baseline mode minus supervised-only, when both ran.
    pub pck_gap_vs_supervised: BTreeMap<String, f64>,
}

pub fn mode_name(m: TrainMode) -> &'static str {
    match m {
        TrainMode::SupervisedOnly => "supervised-only",
        TrainMode::DualposeBaseline => "dualpose-baseline",
        TrainMode::Full => "full",
    }
}

pub fn train_report(cfg: &ExperimentConfig, runs: &[RunResult]) -> TrainReport {
    let mut modes = Vec::new();
    for &mode in &cfg.train.modes {
        let rs: Vec<&RunResult> = runs.iter().filter(|r| r.mode == mode).collect();
        if rs.is_empty() || modes.iter().any(|m: &ModeSummary| m.mode == mode) {
            continue;
        }
        let n = rs.len() as f64;
        modes.push(ModeSummary {
            mode,
            mean_pck: rs.iter().map(|r| r.final_record().pck).sum::<f64>() / n,
            mean_ap: rs.iter().map(|r| r.final_record().ap).sum::<f64>() / n,
            runs: rs
                .iter()
                .map(|r| RunSummary {
                    run: r.run,
                    seed: r.seed,
                    pck: r.final_record().pck,
                    ap: r.final_record().ap,
                    per_joint_pck: r.per_joint_pck.clone(),
                })
                .collect(),
        });
    }
    let base = modes.iter().find(|m| m.mode == TrainMode::SupervisedOnly).map(|m| m.mean_pck);
    let pck_gap_vs_supervised = match base {
        Some(b) => modes
            .iter()
            .filter(|m| m.mode != TrainMode::SupervisedOnly)
            .map(|m| (mode_name(m.mode).to_string(), m.mean_pck - b))
            .collect(),
        None => BTreeMap::new(),
    };
    TrainReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        label_fraction: cfg.data.label_fraction,
        pck_alpha: cfg.train.pck_alpha,
        modes,
        pck_gap_vs_supervised,
    }
}

pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainReport> {
    let runs = train_runs(cfg)?;
    create_dir(out)?;
    let models = out.join("models");
    create_dir(&models)?;
    let csv_path = out.join("history.csv");
    let mut w = csv_writer(&csv_path)?;
    let mut curves: Vec<Series> = Vec::new();
    for r in &runs {
        for e in &r.history {
            csv_row(
                &mut w,
                &csv_path,
                HistoryRow {
                    schema_version: SCHEMA_VERSION,
                    mode: r.mode,
                    run: r.run,
                    seed: r.seed,
                    epoch: e.epoch,
                    supervised_loss: e.supervised_loss,
                    unsupervised_loss: e.unsupervised_loss,
                    accept_rate: e.accept_rate,
                    self_rate: e.self_rate,
                    pck: e.pck,
                    ap: e.ap,
                },
            )?;
        }
        for m in [&r.theta, &r.xi] {
            write_model(&models.join(format!("{}-run{}-{}.plm", mode_name(r.mode), r.run, m.id.name())), m)?;
        }
    }
    csv_finish(w, &csv_path)?;
    for &mode in &cfg.train.modes {
        let rs: Vec<&RunResult> = runs.iter().filter(|r| r.mode == mode).collect();
        if rs.is_empty() || curves.iter().any(|c| c.name == mode_name(mode)) {
            continue;
        }
        let epochs = rs[0].history.len();
        let points = (0..epochs)
            .map(|e| ((e + 1) as f64, rs.iter().map(|r| r.history[e].pck).sum::<f64>() / rs.len() as f64))
            .collect();
        curves.push(Series { name: mode_name(mode).into(), points });
    }
    let report = train_report(cfg, &runs);
    write_json(&out.join("metrics.json"), &report)?;
    let chart = LineChart {
        title: "test PCK during training".into(),
        x_label: "epoch".into(),
        y_label: format!("PCK@{}", cfg.train.pck_alpha),
        series: curves,
    };
    write_text(&out.join("pck_curve.svg"), &chart.to_svg()?)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub scenes: usize,
    pub ap: f64,
    /// Keys are the alphas as written on the command line.
    pub pck_at: BTreeMap<String, f64>,
    /// Per-joint PCK at the first alpha.
    pub per_joint_pck: Vec<f64>,
    pub mean_oks: f64,
}

pub fn run_eval(pred_dir: &Path, gt_index: &Path, alphas: &[f64], out: Option<&Path>) -> Result<EvalReport> {
    if alphas.is_empty() {
        return Err(Error::Usage("at least one PCK alpha is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Usage(format!("PCK alpha must be positive, got {a}")));
    }
    let index = DatasetIndex::load(gt_index)?;
    if index.scenes.is_empty() {
        return Err(Error::format(gt_index, "index lists no scenes"));
    }
    let known: std::collections::BTreeSet<&str> = index.scenes.iter().map(|s| s.id.as_str()).collect();
    let listing = fs::read_dir(pred_dir).map_err(|e| Error::io(pred_dir, e))?;
    let mut extra: Vec<String> = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| Error::io(pred_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("phm") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if !known.contains(stem.as_str()) {
                extra.push(stem);
            }
        }
    }
    if let Some(id) = extra.iter().min() {
        return Err(Error::Scene { id: id.clone(), msg: "prediction has no entry in the index".into() });
    }
    let oks_cfg = OksConfig::coco(index.joints);
    let mut oks_values = Vec::with_capacity(index.scenes.len());
    let mut hits = vec![0usize; alphas.len()];
    let mut total = 0usize;
    let mut joint_hits = vec![0usize; index.joints];
    let mut joint_seen = vec![0usize; index.joints];
    for s in &index.scenes {
        let path = pred_dir.join(format!("{}.phm", s.id));
        if !path.exists() {
            return Err(Error::Scene { id: s.id.clone(), msg: format!("missing prediction file {}", path.display()) });
        }
        let set = read_heatmaps(&path)?;
        if set.num_joints() != index.joints {
            return Err(Error::Scene {
                id: s.id.clone(),
                msg: format!("prediction has {} joints, expected {}", set.num_joints(), index.joints),
            });
        }
        let pred = set.decode();
        oks_values.push(oks(&pred, &s.keypoints, s.bbox.0 * s.bbox.1, &oks_cfg)?);
        for (i, &alpha) in alphas.iter().enumerate() {
            let r = pck(&pred, &s.keypoints, alpha, s.bbox)?;
            hits[i] += r.num_correct();
            if i == 0 {
                total += r.num_evaluated();
                for (j, c) in r.correct.iter().enumerate() {
                    if let Some(c) = c {
                        joint_seen[j] += 1;
                        joint_hits[j] += *c as usize;
                    }
                }
            }
        }
    }
    let frac = |h: usize, n: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        scenes: index.scenes.len(),
        ap: average_precision(&oks_values)?,
        pck_at: alphas.iter().zip(&hits).map(|(a, h)| (format!("{a}"), frac(*h, total))).collect(),
        per_joint_pck: joint_hits.iter().zip(&joint_seen).map(|(h, n)| frac(*h, *n)).collect(),
        mean_oks: oks_values.iter().sum::<f64>() / oks_values.len() as f64,
    };
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &report)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// render and export

pub fn run_render(input: &Path, output: &Path, scale: usize) -> Result<()> {
    let set = read_heatmaps(input)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(output, &heatmap_svg(&set, scale)?)
}

/// Exports the test split (or the train split of run 0) of the configured benchmark.
pub fn run_export(cfg: &ExperimentConfig, out: &Path, split: Split) -> Result<DatasetIndex> {
    let data = benchmark_data(cfg, 0)?;
    let scenes = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    export_dataset(out, scenes, cfg.pipeline.sigma_px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

/// Configured worker count, from the environment.
pub const WORKERS_ENV: &str = "PSEUDOHEAT_WORKERS";

pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

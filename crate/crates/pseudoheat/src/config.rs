//! Experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to the documented defaults.
//! Unknown keys are rejected so a typo can never silently change an experiment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pseudoheat_core::augment::{AugmentPolicy, Augmentation};
use pseudoheat_core::learner::{TrainConfig, TrainMode};
use pseudoheat_core::pseudo::PipelineOptions;
use pseudoheat_core::simulate::SimulationSetup;
use pseudoheat_core::synth::{NoiseProfile, SceneConfig};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every trial, scene and training run derives its stream from it.
    pub seed: u64,
    pub data: DataConfig,
    pub augment: AugmentConfig,
    pub pipeline: PipelineOptions,
    pub train: TrainSection,
    pub simulate: SimulateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            data: DataConfig::default(),
            augment: AugmentConfig::default(),
            pipeline: PipelineOptions::default(),
            train: TrainSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Grid, skeleton, dataset sizes and the appearance model of the synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub width: usize,
    pub height: usize,
    pub joints: usize,
    pub channels: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub label_fraction: f64,
    pub appearance: Appearance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Appearance {
    pub blob_sigma: f64,
    pub limb_sigma: f64,
    pub code_noise: f64,
    pub clutter_rate: f64,
    pub pixel_noise: f64,
    pub tilt_deg: f64,
    pub side_separation: f64,
    pub code_seed: u64,
    pub nuisance_channels: usize,
    pub nuisance_amp: f64,
    pub occlusion_prob: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SceneConfig::default();
        Self {
            width: s.width,
            height: s.height,
            joints: s.joints,
            channels: s.channels,
            train_scenes: 40,
            test_scenes: 100,
            label_fraction: TrainConfig::default().label_fraction,
            appearance: Appearance::default(),
        }
    }
}

impl Default for Appearance {
    fn default() -> Self {
        let s = SceneConfig::default();
        Self {
            blob_sigma: s.blob_sigma,
            limb_sigma: s.limb_sigma,
            code_noise: s.code_noise,
            clutter_rate: s.clutter_rate,
            pixel_noise: s.pixel_noise,
            tilt_deg: s.tilt_deg,
            side_separation: s.side_separation,
            code_seed: s.code_seed,
            nuisance_channels: s.nuisance_channels,
            nuisance_amp: s.nuisance_amp,
            occlusion_prob: s.occlusion_prob,
        }
    }
}

impl DataConfig {
    pub fn scene(&self) -> SceneConfig {
        let a = &self.appearance;
        SceneConfig {
            width: self.width,
            height: self.height,
            joints: self.joints,
            channels: self.channels,
            blob_sigma: a.blob_sigma,
            limb_sigma: a.limb_sigma,
            code_noise: a.code_noise,
            clutter_rate: a.clutter_rate,
            pixel_noise: a.pixel_noise,
            tilt_deg: a.tilt_deg,
            side_separation: a.side_separation,
            code_seed: a.code_seed,
            nuisance_channels: a.nuisance_channels,
            nuisance_amp: a.nuisance_amp,
            occlusion_prob: a.occlusion_prob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub weak: AugmentPolicy,
    pub strong: AugmentPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { weak: AugmentPolicy::weak(), strong: AugmentPolicy::strong() }
    }
}

impl AugmentConfig {
    pub fn build(&self) -> Result<Augmentation> {
        Ok(Augmentation::new(&self.weak, &self.strong)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub unsup_weight: f64,
    pub pck_alpha: f64,
    /// Runs per mode; run `i` uses master seed `seed + i`.
    pub seeds: usize,
    pub modes: Vec<TrainMode>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            epochs: t.epochs,
            batch: t.batch,
            unsup_weight: t.unsup_weight,
            pck_alpha: t.pck_alpha,
            seeds: 1,
            modes: vec![TrainMode::SupervisedOnly, TrainMode::DualposeBaseline, TrainMode::Full],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trials: usize,
    pub pck_alpha: f64,
    pub theta: NoiseProfile,
    pub xi: NoiseProfile,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SimulationSetup::default();
        Self { trials: s.trials, pck_alpha: s.pck_alpha, theta: s.theta, xi: s.xi }
    }
}

impl ExperimentConfig {
    /// Training hyper-parameters of run `run` (0-based).
    pub fn train_config(&self, run: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            epochs: t.epochs,
            batch: t.batch,
            label_fraction: self.data.label_fraction,
            seed: self.seed.wrapping_add(run as u64),
            unsup_weight: t.unsup_weight,
            pck_alpha: t.pck_alpha,
        }
    }

    pub fn simulation(&self) -> SimulationSetup {
        let s = &self.simulate;
        SimulationSetup { trials: s.trials, seed: self.seed, theta: s.theta, xi: s.xi, pck_alpha: s.pck_alpha }
    }

    /// Range checks, each failure naming the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::range(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let d = &self.data;
        let a = &d.appearance;
        check("data.width", d.width >= 16, || format!("must be at least 16, got {}", d.width))?;
        check("data.height", d.height >= 16, || format!("must be at least 16, got {}", d.height))?;
        check("data.joints", d.joints >= 1, || "must be at least 1".into())?;
        check("data.channels", d.channels >= 4, || format!("must be at least 4, got {}", d.channels))?;
        check("data.train_scenes", d.train_scenes >= 1, || "must be at least 1".into())?;
        check("data.test_scenes", d.test_scenes >= 1, || "must be at least 1".into())?;
        check("data.label_fraction", d.label_fraction > 0.0 && d.label_fraction <= 1.0, || {
            format!("must lie in (0, 1], got {}", d.label_fraction)
        })?;
        positive("data.appearance.blob_sigma", a.blob_sigma)?;
        positive("data.appearance.limb_sigma", a.limb_sigma)?;
        non_negative("data.appearance.code_noise", a.code_noise)?;
        non_negative("data.appearance.clutter_rate", a.clutter_rate)?;
        non_negative("data.appearance.pixel_noise", a.pixel_noise)?;
        non_negative("data.appearance.tilt_deg", a.tilt_deg)?;
        non_negative("data.appearance.side_separation", a.side_separation)?;
        non_negative("data.appearance.nuisance_amp", a.nuisance_amp)?;
        check("data.appearance.occlusion_prob", (0.0..1.0).contains(&a.occlusion_prob), || {
            format!("must lie in [0, 1), got {}", a.occlusion_prob)
        })?;
        check("data.appearance.nuisance_channels", d.channels >= 4 + a.nuisance_channels, || {
            format!("{} nuisance channels need data.channels >= {}", a.nuisance_channels, 4 + a.nuisance_channels)
        })?;
        section("data", d.scene().validate())?;

        section("augment.weak", self.augment.weak.validate())?;
        section("augment.strong", self.augment.strong.validate())?;

        let p = &self.pipeline;
        check("pipeline.tau", (0.0..1.0).contains(&p.tau), || format!("must lie in [0, 1), got {}", p.tau))?;
        non_negative("pipeline.delta", p.delta)?;
        positive("pipeline.sigma_px", p.sigma_px)?;
        section("pipeline", p.validate())?;

        let t = &self.train;
        positive("train.lr", t.lr)?;
        check("train.batch", t.batch >= 1, || "must be at least 1".into())?;
        non_negative("train.unsup_weight", t.unsup_weight)?;
        positive("train.pck_alpha", t.pck_alpha)?;
        check("train.seeds", t.seeds >= 1, || "must be at least 1".into())?;
        check("train.modes", !t.modes.is_empty(), || "must list at least one mode".into())?;
        let labeled = self.train_config(0).labeled_count(d.train_scenes);
        check("data.label_fraction", labeled >= 1, || {
            format!("{} of {} scenes leaves no labeled scene", d.label_fraction, d.train_scenes)
        })?;

        let s = &self.simulate;
        check("simulate.trials", s.trials >= 1, || "must be at least 1".into())?;
        positive("simulate.pck_alpha", s.pck_alpha)?;
        section("simulate.theta", s.theta.validate())?;
        section("simulate.xi", s.xi.validate())?;
        Ok(())
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") || msg.contains("unknown variant") {
                Error::ConfigUnknownKey { path: path.to_path_buf(), msg }
            } else {
                Error::ConfigSyntax { path: path.to_path_buf(), msg }
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigMissing { path: path.to_path_buf() },
        _ => Error::io(path, e),
    })?;
    ExperimentConfig::from_toml(&text, path)
}

fn check(field: &str, ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::range(field, msg()))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    check(field, v > 0.0 && v.is_finite(), || format!("must be positive, got {v}"))
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    check(field, v >= 0.0 && v.is_finite(), || format!("must be >= 0, got {v}"))
}

fn section(name: &str, r: pseudoheat_core::Result<()>) -> Result<()> {
    r.map_err(|e| Error::range(name, e.to_string()))
}

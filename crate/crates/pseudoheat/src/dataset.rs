//! Dataset export and the JSON index that names every scene's files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pseudoheat_core::pseudo::{PseudoLabelSet, Source};
use pseudoheat_core::synth::SyntheticScene;
use pseudoheat_core::{AffineTransform, Dims, KeypointSet};

use crate::config::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::format::{write_heatmaps, write_phm, PhmGrid};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: String,
    /// Feature grid, relative to the index directory.
    pub features: String,
    /// Ground-truth heatmaps, relative to the index directory.
    pub heatmaps: String,
    pub keypoints: KeypointSet,
    pub bbox: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub schema_version: u32,
    pub dims: Dims,
    pub joints: usize,
    pub channels: usize,
    pub sigma_px: f64,
    pub scenes: Vec<SceneEntry>,
}

impl DatasetIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if index.schema_version != SCHEMA_VERSION {
            return Err(Error::format(path, format!("unsupported schema_version {}", index.schema_version)));
        }
        for s in &index.scenes {
            if s.keypoints.len() != index.joints {
                return Err(Error::Scene {
                    id: s.id.clone(),
                    msg: format!("{} keypoints, index declares {} joints", s.keypoints.len(), index.joints),
                });
            }
        }
        Ok(index)
    }
}

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:05}")
}

/// Writes features and ground-truth heatmaps of every scene plus `index.json`.
pub fn export_dataset(dir: &Path, scenes: &[SyntheticScene], sigma_px: f64) -> Result<DatasetIndex> {
    let first = scenes.first().ok_or_else(|| Error::Usage("cannot export an empty dataset".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let id = scene_id(i);
        let features = format!("{id}.features.phm");
        let heatmaps = format!("{id}.gt.phm");
        write_phm(&dir.join(&features), &PhmGrid::from_features(&scene.features))?;
        write_heatmaps(&dir.join(&heatmaps), &scene.target_heatmaps(&AffineTransform::identity(), sigma_px)?)?;
        entries.push(SceneEntry { id, features, heatmaps, keypoints: scene.keypoints.clone(), bbox: scene.bbox });
    }
    let index = DatasetIndex {
        schema_version: SCHEMA_VERSION,
        dims: first.dims(),
        joints: first.keypoints.len(),
        channels: first.features.channels(),
        sigma_px,
        scenes: entries,
    };
    write_json(&dir.join(INDEX_FILE), &index)?;
    Ok(index)
}

/// Sidecar record of one pseudo-label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub joint: usize,
    pub accepted: bool,
    /// `None` is written as `null` when the uncertainty is not finite.
    pub uncertainty: Option<f64>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub schema_version: u32,
    pub heatmaps: String,
    pub labels: Vec<LabelRecord>,
}

/// Writes `<stem>.phm` with the label heatmaps and `<stem>.json` with the per-joint records.
pub fn write_pseudo_labels(dir: &Path, stem: &str, set: &PseudoLabelSet) -> Result<(PathBuf, PathBuf)> {
    let phm = dir.join(format!("{stem}.phm"));
    let json = dir.join(format!("{stem}.json"));
    write_heatmaps(&phm, &set.heatmaps()?)?;
    let sidecar = LabelSidecar {
        schema_version: SCHEMA_VERSION,
        heatmaps: format!("{stem}.phm"),
        labels: set
            .labels()
            .iter()
            .enumerate()
            .map(|(joint, l)| LabelRecord {
                joint,
                accepted: l.accepted,
                uncertainty: l.uncertainty.is_finite().then_some(l.uncertainty),
                source: l.source,
            })
            .collect(),
    };
    write_json(&json, &sidecar)?;
    Ok((phm, json))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

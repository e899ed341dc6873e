//! Binary grid and model files.
//!
//! `PHM1`: magic, then `u32` LE plane count, height and width, then `f32` LE
//! values plane-major and row-major. Heatmap sets and feature grids share it.
//!
//! `PLM1`: magic, then `u32` LE joints, channels and student index, then the
//! `J * (C + 1)` weights as `f64` LE.

use std::fs;
use std::path::Path;

use pseudoheat_core::learner::{StudentId, StudentModel};
use pseudoheat_core::synth::FeatureGrid;
use pseudoheat_core::{Dims, Heatmap, HeatmapSet};

use crate::error::{Error, Result};

pub const PHM_MAGIC: &[u8; 4] = b"PHM1";
pub const PLM_MAGIC: &[u8; 4] = b"PLM1";
const HEADER: usize = 16;

/// Contents of a PHM1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct PhmGrid {
    pub planes: usize,
    pub dims: Dims,
    pub values: Vec<f32>,
}

impl PhmGrid {
    pub fn from_heatmaps(set: &HeatmapSet) -> Self {
        let values = set.joints().iter().flat_map(|h| h.values().iter().map(|&v| v as f32)).collect();
        Self { planes: set.num_joints(), dims: set.dims(), values }
    }

    pub fn from_features(grid: &FeatureGrid) -> Self {
        Self { planes: grid.channels(), dims: grid.dims(), values: grid.data().iter().map(|&v| v as f32).collect() }
    }

    pub fn plane(&self, p: usize) -> &[f32] {
        let n = self.dims.len();
        &self.values[p * n..(p + 1) * n]
    }

    /// Interprets the planes as joint heatmaps (values are clamped into `[0, 1]`).
    pub fn to_heatmaps(&self) -> Result<HeatmapSet> {
        let joints = (0..self.planes)
            .map(|p| Heatmap::new(self.dims, self.plane(p).iter().map(|&v| v as f64).collect()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(HeatmapSet::new(joints)?)
    }

    pub fn to_features(&self) -> Result<FeatureGrid> {
        Ok(FeatureGrid::from_data(self.dims, self.planes, self.values.iter().map(|&v| v as f64).collect())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.values.len());
        out.extend_from_slice(PHM_MAGIC);
        for v in [self.planes, self.dims.height, self.dims.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (magic, header) = parse_header(bytes, path, PHM_MAGIC)?;
        debug_assert_eq!(magic, PHM_MAGIC);
        let (planes, height, width) = (header[0] as usize, header[1] as usize, header[2] as usize);
        if planes == 0 || height == 0 || width == 0 {
            return Err(Error::format(path, format!("empty grid {planes}x{height}x{width}")));
        }
        let count = planes
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::format(path, "grid size overflows"))?;
        let body = &bytes[HEADER..];
        if body.len() != 4 * count {
            return Err(Error::format(path, format!("expected {} value bytes, found {}", 4 * count, body.len())));
        }
        let values: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("non-finite value at index {i}")));
        }
        Ok(Self { planes, dims: Dims::new(width, height), values })
    }
}

fn parse_header<'a>(bytes: &'a [u8], path: &Path, magic: &[u8; 4]) -> Result<(&'a [u8], [u32; 3])> {
    if bytes.len() < HEADER {
        return Err(Error::format(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(path, format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    Ok((&bytes[..4], [word(0), word(1), word(2)]))
}

pub fn write_phm(path: &Path, grid: &PhmGrid) -> Result<()> {
    fs::write(path, grid.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_phm(path: &Path) -> Result<PhmGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PhmGrid::from_bytes(&bytes, path)
}

pub fn write_heatmaps(path: &Path, set: &HeatmapSet) -> Result<()> {
    write_phm(path, &PhmGrid::from_heatmaps(set))
}

pub fn read_heatmaps(path: &Path) -> Result<HeatmapSet> {
    read_phm(path)?.to_heatmaps()
}

pub fn model_to_bytes(m: &StudentModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.weights().len());
    out.extend_from_slice(PLM_MAGIC);
    for v in [m.joints(), m.channels(), m.id.index()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for w in m.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<StudentModel> {
    let (_, [joints, channels, id]) = parse_header(bytes, path, PLM_MAGIC)?;
    let (joints, channels) = (joints as usize, channels as usize);
    let id = StudentId::from_index(id as usize).map_err(|e| Error::format(path, e.to_string()))?;
    let count = joints * (channels + 1);
    let body = &bytes[HEADER..];
    if body.len() != 8 * count {
        return Err(Error::format(path, format!("expected {} weight bytes, found {}", 8 * count, body.len())));
    }
    let weights = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    StudentModel::from_weights(id, joints, channels, weights).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_model(path: &Path, m: &StudentModel) -> Result<()> {
    fs::write(path, model_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<StudentModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, path)
}

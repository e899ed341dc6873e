//! Per-joint response grids, Gaussian target rendering and peak decoding.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, mismatch, Result};
use crate::keypoint::{Keypoint, KeypointSet};
use crate::math;

/// Grid size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn validate(self) -> Result<Self> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid!("grid dims must be positive, got {}x{}", self.width, self.height));
        }
        Ok(self)
    }

    #[inline]
    pub const fn len(self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Geometric center in pixel coordinates.
    pub fn center(self) -> (f64, f64) {
        ((self.width as f64 - 1.0) * 0.5, (self.height as f64 - 1.0) * 0.5)
    }

    #[inline]
    pub fn contains(self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

/// A single joint's response grid, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    dims: Dims,
    values: Vec<f64>,
}

impl Heatmap {
    /// Builds a heatmap, clamping every value into `[0, 1]`.
    pub fn new(dims: Dims, mut values: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(mismatch!(
                "heatmap {}x{} needs {} values, got {}",
                dims.width,
                dims.height,
                dims.len(),
                values.len()
            ));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(invalid!("heatmap values must be finite"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        Ok(Self { dims, values: vec![0.0; dims.len()] })
    }

    /// Caller guarantees finite values within `[0, 1]` and a matching length.
    pub(crate) fn from_clamped(dims: Dims, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), dims.len());
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self { dims, values }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims.height
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.dims.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Boolean grid marking pixels that carry information.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn all_valid(dims: Dims) -> Self {
        Self { dims, bits: vec![true; dims.len()] }
    }

    pub fn all_invalid(dims: Dims) -> Self {
        Self { dims, bits: vec![false; dims.len()] }
    }

    pub fn from_bits(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(mismatch!("mask needs {} entries, got {}", dims.len(), bits.len()));
        }
        Ok(Self { dims, bits })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.dims.width + x]
    }

    pub fn count_valid(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// J heatmaps sharing one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    joints: Vec<Heatmap>,
}

impl HeatmapSet {
    pub fn new(joints: Vec<Heatmap>) -> Result<Self> {
        let first = joints.first().ok_or_else(|| invalid!("heatmap set needs at least one joint"))?;
        let dims = first.dims();
        if let Some(bad) = joints.iter().find(|h| h.dims() != dims) {
            return Err(mismatch!(
                "joint heatmaps must share dims: {}x{} vs {}x{}",
                dims.width,
                dims.height,
                bad.width(),
                bad.height()
            ));
        }
        Ok(Self { joints })
    }

    pub fn zeros(joints: usize, dims: Dims) -> Result<Self> {
        if joints == 0 {
            return Err(invalid!("heatmap set needs at least one joint"));
        }
        let zero = Heatmap::zeros(dims)?;
        Ok(Self { joints: vec![zero; joints] })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.joints[0].dims()
    }

    #[inline]
    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    #[inline]
    pub fn joints(&self) -> &[Heatmap] {
        &self.joints
    }

    #[inline]
    pub fn joint(&self, j: usize) -> &Heatmap {
        &self.joints[j]
    }

    pub fn into_joints(self) -> Vec<Heatmap> {
        self.joints
    }

    /// Renders one unit-amplitude Gaussian per valid keypoint; invalid joints get zero maps.
    pub fn from_keypoints(kps: &KeypointSet, dims: Dims, sigma: f64) -> Result<Self> {
        let joints = kps
            .points()
            .iter()
            .map(|kp| if kp.valid { render_gaussian((kp.x, kp.y), sigma, dims, 1.0) } else { Heatmap::zeros(dims) })
            .collect::<Result<Vec<_>>>()?;
        Self::new(joints)
    }

    /// Decodes every joint with [`argmax_decode`].
    pub fn decode(&self) -> KeypointSet {
        KeypointSet::new(self.joints.iter().map(argmax_decode).collect())
    }

    pub fn decode_with(&self, opts: DecodeOptions) -> KeypointSet {
        KeypointSet::new(self.joints.iter().map(|h| decode_with(h, opts)).collect())
    }
}

/// `amplitude * exp(-|p - center|^2 / (2 sigma^2))` sampled at every pixel.
pub fn render_gaussian(center: (f64, f64), sigma: f64, dims: Dims, amplitude: f64) -> Result<Heatmap> {
    dims.validate()?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!("sigma must be positive, got {sigma}"));
    }
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(invalid!("amplitude must lie in (0, 1], got {amplitude}"));
    }
    if !center.0.is_finite() || !center.1.is_finite() {
        return Err(invalid!("gaussian center must be finite"));
    }
    let mut values = vec![0.0; dims.len()];
    splat_gaussian(&mut values, dims, center, sigma, amplitude);
    Ok(Heatmap::from_clamped(dims, values))
}

/// Writes `max(existing, gaussian)` into `values`. Pixels beyond 6 sigma are skipped.
pub(crate) fn splat_gaussian(values: &mut [f64], dims: Dims, center: (f64, f64), sigma: f64, amplitude: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let reach = 6.0 * sigma;
    let x_lo = math::floor(center.0 - reach).max(0.0);
    let y_lo = math::floor(center.1 - reach).max(0.0);
    let x_hi = math::floor(center.0 + reach + 1.0).min(dims.width as f64);
    let y_hi = math::floor(center.1 + reach + 1.0).min(dims.height as f64);
    if x_lo >= x_hi || y_lo >= y_hi {
        return;
    }
    let (x_lo, x_hi, y_lo, y_hi) = (x_lo as usize, x_hi as usize, y_lo as usize, y_hi as usize);
    for y in y_lo..y_hi {
        let dy = y as f64 - center.1;
        let row = &mut values[y * dims.width..(y + 1) * dims.width];
        for (x, v) in row.iter_mut().enumerate().take(x_hi).skip(x_lo) {
            let dx = x as f64 - center.0;
            let g = amplitude * math::exp(-(dx * dx + dy * dy) * inv);
            if g > *v {
                *v = g;
            }
        }
    }
}

/// Peak decoding options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodeOptions {
    /// Shift the integer peak a quarter pixel toward the larger neighbour on each axis.
    pub subpixel: bool,
}

/// Integer argmax. Ties go to the lowest row-major index; an all-zero map decodes
/// as an invalid keypoint with confidence 0.
pub fn argmax_decode(hm: &Heatmap) -> Keypoint {
    let mut best = 0usize;
    let mut best_v = hm.values[0];
    for (i, &v) in hm.values.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    let w = hm.width();
    let (x, y) = ((best % w) as f64, (best / w) as f64);
    if best_v > 0.0 {
        Keypoint::new(x, y, best_v)
    } else {
        Keypoint { x, y, confidence: 0.0, valid: false }
    }
}

pub fn decode_with(hm: &Heatmap, opts: DecodeOptions) -> Keypoint {
    let mut kp = argmax_decode(hm);
    if opts.subpixel && kp.valid {
        let (x, y) = (kp.x as usize, kp.y as usize);
        let (w, h) = (hm.width(), hm.height());
        if x > 0 && x + 1 < w {
            let d = hm.get(x + 1, y) - hm.get(x - 1, y);
            kp.x += 0.25 * sign(d);
        }
        if y > 0 && y + 1 < h {
            let d = hm.get(x, y + 1) - hm.get(x, y - 1);
            kp.y += 0.25 * sign(d);
        }
    }
    kp
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

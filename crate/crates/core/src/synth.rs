//! Synthetic stick-figure scenes and a parameterized noisy heatmap predictor.
//!
//! A scene carries `C` feature channels:
//!
//! * code channels. Each joint type has a code vector and the two sides of a
//!   left/right pair sit `side_separation` apart along a per-type direction. A
//!   joint is rendered as a blob scaled by its (per-scene perturbed) code.
//!   Clutter blobs with random codes land on the same channels.
//! * `nuisance_channels` smooth random fields with no relation to the figure.
//! * one limb channel, `exp(-d^2 / 2s^2)` of the distance to the nearest limb.
//! * two gradient channels: x and y central differences of the limb channel.
//!
//! Sensor noise on the code and nuisance channels is drawn afresh for every
//! rendering, so two views of one scene never see the same noise. Gradient
//! channels are recomputed after every warp, which makes a linear per-pixel
//! readout orientation dependent, like a small convolutional stem.
//!
//! Occluded joints leave no blob and no limb, and their ground truth is marked
//! invalid, the way unannotated joints are skipped in keypoint benchmarks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::affine::{warp_channels, AffineTransform};
use crate::error::{invalid, mismatch, Result};
use crate::heatmap::{splat_gaussian, Dims, Heatmap, HeatmapSet};
use crate::keypoint::{Keypoint, KeypointSet};
use crate::math;
use crate::rng;

/// Smallest grid the figure generator accepts.
pub const MIN_SCENE_SIDE: usize = 16;

/// Channel-major stack of real-valued grids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(dims: Dims, channels: usize) -> Result<Self> {
        dims.validate()?;
        if channels == 0 {
            return Err(invalid!("feature grid needs at least one channel"));
        }
        Ok(Self { dims, channels, data: vec![0.0; channels * dims.len()] })
    }

    pub fn from_data(dims: Dims, channels: usize, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if channels == 0 {
            return Err(invalid!("feature grid needs at least one channel"));
        }
        if data.len() != channels * dims.len() {
            return Err(mismatch!("feature grid needs {} values, got {}", channels * dims.len(), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("feature values must be finite"));
        }
        Ok(Self { dims, channels, data })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.dims.len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.dims.len() + y * self.dims.width + x]
    }
}

/// Generator parameters for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub joints: usize,
    /// Total feature channels `C`; must be at least 4.
    pub channels: usize,
    pub blob_sigma: f64,
    pub limb_sigma: f64,
    /// Std-dev of the per-scene perturbation of every joint-type code entry.
    pub code_noise: f64,
    /// Poisson mean of clutter blobs per scene.
    pub clutter_rate: f64,
    pub pixel_noise: f64,
    /// Global figure rotation is uniform in `[-tilt, tilt]` degrees.
    pub tilt_deg: f64,
    /// Distance between the codes of a left/right pair, along a random unit
    /// direction per type. Zero makes the pair indistinguishable by appearance.
    pub side_separation: f64,
    /// Seeds the code table shared by every scene of the dataset.
    pub code_seed: u64,
    /// Appearance channels holding smooth per-scene random fields that carry no
    /// information about the joints.
    pub nuisance_channels: usize,
    /// Std-dev of the amplitude of each bump of a nuisance field.
    pub nuisance_amp: f64,
    /// Probability that a joint is occluded: it leaves no appearance blob and
    /// its ground truth is marked invalid (not annotated, not evaluated).
    pub occlusion_prob: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            joints: 7,
            channels: 9,
            blob_sigma: 1.5,
            limb_sigma: 1.2,
            code_noise: 0.3,
            clutter_rate: 4.0,
            pixel_noise: 0.1,
            tilt_deg: 30.0,
            side_separation: 1.0,
            code_seed: 7,
            nuisance_channels: 0,
            nuisance_amp: 0.5,
            occlusion_prob: 0.15,
        }
    }
}

impl SceneConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    /// Channels carrying joint-type codes.
    pub fn code_channels(&self) -> usize {
        self.channels.saturating_sub(3 + self.nuisance_channels)
    }

    /// Code plus nuisance channels; sensor noise applies to exactly these.
    pub fn appearance_channels(&self) -> usize {
        self.channels.saturating_sub(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 {
            return Err(invalid!("scene needs at least one joint"));
        }
        if self.width < MIN_SCENE_SIDE || self.height < MIN_SCENE_SIDE {
            return Err(invalid!(
                "grid {}x{} too small to contain the figure (min side {MIN_SCENE_SIDE})",
                self.width,
                self.height
            ));
        }
        if self.channels < 4 + self.nuisance_channels {
            return Err(invalid!(
                "need at least {} feature channels for {} nuisance channels, got {}",
                4 + self.nuisance_channels,
                self.nuisance_channels,
                self.channels
            ));
        }
        for (name, v) in [("blob_sigma", self.blob_sigma), ("limb_sigma", self.limb_sigma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("code_noise", self.code_noise),
            ("side_separation", self.side_separation),
            ("clutter_rate", self.clutter_rate),
            ("pixel_noise", self.pixel_noise),
            ("tilt_deg", self.tilt_deg),
            ("nuisance_amp", self.nuisance_amp),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid!("{name} must be >= 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.occlusion_prob) {
            return Err(invalid!("occlusion_prob must lie in [0, 1), got {}", self.occlusion_prob));
        }
        Ok(())
    }

    /// Appearance code of every joint: one row of `code_channels` non-negative
    /// entries with maximum 1. Pair members straddle their type's code.
    pub fn code_table(&self) -> Vec<Vec<f64>> {
        let mut rng = rng::stream(self.code_seed, 0);
        let cc = self.code_channels();
        let types: Vec<(Vec<f64>, Vec<f64>)> = (0..num_joint_types(self.joints))
            .map(|_| {
                let base: Vec<f64> = (0..cc).map(|_| rng.random::<f64>()).collect();
                let mut dir: Vec<f64> = (0..cc).map(|_| rng.random::<f64>() - 0.5).collect();
                let norm = math::sqrt(dir.iter().map(|d| d * d).sum::<f64>()).max(1e-12);
                dir.iter_mut().for_each(|d| *d /= norm);
                (base, dir)
            })
            .collect();
        (0..self.joints)
            .map(|j| {
                let (base, dir) = &types[joint_type(j)];
                let side = match j {
                    0 => 0.0,
                    _ if j % 2 == 1 => -0.5,
                    _ => 0.5,
                };
                let mut row: Vec<f64> =
                    base.iter().zip(dir).map(|(b, d)| (b + side * self.side_separation * d).max(0.0)).collect();
                let max = row.iter().copied().fold(0.0, f64::max).max(1e-6);
                row.iter_mut().for_each(|v| *v /= max);
                row
            })
            .collect()
    }
}

/// Parent of joint `j` in the chain topology; `None` for the head.
///
/// Joint 0 is the head, 1/2 the shoulders (attached through a virtual neck),
/// and every later joint hangs off `j - 2`, alternating left and right.
pub fn parent(j: usize) -> Option<usize> {
    match j {
        0 => None,
        1 | 2 => Some(0),
        _ => Some(j - 2),
    }
}

/// Appearance class shared by a left/right pair.
pub fn joint_type(j: usize) -> usize {
    j.div_ceil(2)
}

pub fn num_joint_types(joints: usize) -> usize {
    joint_type(joints.max(1) - 1) + 1
}

/// Limb segments as joint index pairs.
pub fn limbs(joints: usize) -> Vec<(usize, usize)> {
    (1..joints).filter_map(|j| parent(j).map(|p| (p, j))).collect()
}

/// Ground-truth pose of one figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub keypoints: KeypointSet,
    /// Bounding box `(width, height)` in pixels.
    pub bbox: (f64, f64),
}

/// Padding added around the joints' extent when forming the bounding box.
pub const BBOX_MARGIN: f64 = 2.0;

/// Samples an articulated figure that fits strictly inside the grid.
pub fn sample_pose<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Pose> {
    cfg.validate()?;
    let dims = cfg.dims();
    let s = dims.width.min(dims.height) as f64 / 64.0;
    let margin = 3.0 * s;
    for _ in 0..1000 {
        let (cx, cy) = dims.center();
        let neck = (cx + uniform(rng, -5.0, 5.0) * s, cy - 0.125 * dims.height as f64 + uniform(rng, -5.0, 5.0) * s);
        let tilt = uniform(rng, -cfg.tilt_deg, cfg.tilt_deg);
        let mut local = vec![(0.0, 0.0); cfg.joints];
        let mut angle = vec![0.0f64; cfg.joints];
        local[0] = (0.0, -uniform(rng, 7.0, 10.0) * s);
        let half_width = uniform(rng, 7.0, 10.0) * s;
        for j in 1..cfg.joints {
            let side = if j % 2 == 1 { -1.0 } else { 1.0 };
            match j {
                1 | 2 => local[j] = (side * half_width, 0.0),
                3 | 4 => {
                    let a = uniform(rng, 10.0, 170.0).to_radians();
                    let len = uniform(rng, 9.0, 13.0) * s;
                    let p = local[j - 2];
                    angle[j] = a;
                    local[j] = (p.0 + len * side * libm::fabs(libm::cos(a)), p.1 + len * libm::sin(a));
                }
                _ => {
                    let a = angle[j - 2] + uniform(rng, -80.0, 80.0).to_radians();
                    let len = uniform(rng, 8.0, 12.0) * s;
                    let p = local[j - 2];
                    angle[j] = a;
                    local[j] = (p.0 + len * side * libm::cos(a), p.1 + len * libm::sin(a));
                }
            }
        }
        let (sn, cs) = math::sin_cos_deg(tilt);
        let kps: KeypointSet = local
            .iter()
            .map(|&(x, y)| Keypoint::new(neck.0 + cs * x - sn * y, neck.1 + sn * x + cs * y, 1.0))
            .collect();
        let fits = kps.points().iter().all(|p| {
            p.x >= margin
                && p.y >= margin
                && p.x <= dims.width as f64 - 1.0 - margin
                && p.y <= dims.height as f64 - 1.0 - margin
        });
        if fits {
            let bbox = kps.extent(BBOX_MARGIN);
            return Ok(Pose { keypoints: kps, bbox });
        }
    }
    Err(invalid!("grid {}x{} too small to contain the figure", dims.width, dims.height))
}

/// One synthetic image: features plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Canonical rendering, sensor noise included.
    pub features: FeatureGrid,
    pub keypoints: KeypointSet,
    pub bbox: (f64, f64),
    /// Noise-free appearance and limb channels; views are rendered from these.
    clean: FeatureGrid,
    pixel_noise: f64,
}

impl SyntheticScene {
    pub fn dims(&self) -> Dims {
        self.features.dims()
    }

    /// Features seen through an augmentation: appearance and limb channels are
    /// warped, gradient channels are recomputed in the view frame.
    pub fn view_features(&self, t: &AffineTransform) -> Result<FeatureGrid> {
        let dims = self.dims();
        let base = self.features.channels() - 2;
        let (mut data, _) = warp_channels(&self.features.data()[..base * dims.len()], base, dims, t, dims)?;
        data.resize(self.features.channels() * dims.len(), 0.0);
        let mut grid = FeatureGrid { dims, channels: self.features.channels(), data };
        fill_gradients(&mut grid);
        Ok(grid)
    }

    /// A fresh rendering through `t`: the noise-free channels are warped, new
    /// sensor noise is added to the appearance channels, and gradients are
    /// recomputed. Independent noise per view is what makes views disagree.
    pub fn render_view<R: Rng + ?Sized>(&self, t: &AffineTransform, rng: &mut R) -> Result<FeatureGrid> {
        let dims = self.dims();
        let channels = self.features.channels();
        let base = channels - 2;
        let (mut data, _) = warp_channels(self.clean.data(), base, dims, t, dims)?;
        if self.pixel_noise > 0.0 {
            let noise = Normal::new(0.0, self.pixel_noise).map_err(|_| invalid!("bad pixel_noise"))?;
            data[..(base - 1) * dims.len()].iter_mut().for_each(|v| *v += noise.sample(rng));
        }
        data.resize(channels * dims.len(), 0.0);
        let mut grid = FeatureGrid { dims, channels, data };
        fill_gradients(&mut grid);
        Ok(grid)
    }

    /// Ground-truth heatmaps in the frame reached through `t`.
    pub fn target_heatmaps(&self, t: &AffineTransform, sigma: f64) -> Result<HeatmapSet> {
        let dims = self.dims();
        HeatmapSet::from_keypoints(&t.apply_keypoints(&self.keypoints, dims), dims, sigma)
    }
}

/// Renders a scene for `pose`.
pub fn render_scene<R: Rng + ?Sized>(cfg: &SceneConfig, pose: &Pose, rng: &mut R) -> Result<SyntheticScene> {
    cfg.validate()?;
    let dims = cfg.dims();
    let cc = cfg.code_channels();
    let n = dims.len();
    let mut grid = FeatureGrid::zeros(dims, cfg.channels)?;
    let codes = cfg.code_table();
    let jitter = Normal::new(0.0, cfg.code_noise.max(0.0)).map_err(|_| invalid!("bad code_noise"))?;
    let scene_codes: Vec<Vec<f64>> = codes
        .iter()
        .map(|row| row.iter().map(|c| c + if cfg.code_noise > 0.0 { jitter.sample(rng) } else { 0.0 }).collect())
        .collect();
    let mut keypoints = pose.keypoints.clone();
    if cfg.occlusion_prob > 0.0 {
        for kp in keypoints.points_mut() {
            if rng.random::<f64>() < cfg.occlusion_prob {
                kp.valid = false;
            }
        }
    }
    let mut blob = vec![0.0; n];
    for (j, kp) in keypoints.points().iter().enumerate() {
        if !kp.valid {
            continue;
        }
        blob.iter_mut().for_each(|v| *v = 0.0);
        splat_blob(&mut blob, dims, (kp.x, kp.y), cfg.blob_sigma);
        let code = &scene_codes[j];
        for (c, &weight) in code.iter().enumerate() {
            let plane = grid.channel_mut(c);
            plane.iter_mut().zip(&blob).for_each(|(p, b)| *p += weight * b);
        }
    }
    let clutter = if cfg.clutter_rate > 0.0 {
        Poisson::new(cfg.clutter_rate).map_err(|_| invalid!("bad clutter_rate"))?.sample(rng) as usize
    } else {
        0
    };
    for _ in 0..clutter {
        let at = (uniform(rng, 2.0, dims.width as f64 - 3.0), uniform(rng, 2.0, dims.height as f64 - 3.0));
        let code: Vec<f64> = (0..cc).map(|_| rng.random::<f64>()).collect();
        blob.iter_mut().for_each(|v| *v = 0.0);
        splat_blob(&mut blob, dims, at, cfg.blob_sigma);
        for (c, &weight) in code.iter().enumerate() {
            let plane = grid.channel_mut(c);
            plane.iter_mut().zip(&blob).for_each(|(p, b)| *p += weight * b);
        }
    }
    let appearance = cfg.appearance_channels();
    for c in cc..appearance {
        for _ in 0..NUISANCE_BUMPS {
            let at = (uniform(rng, 0.0, dims.width as f64), uniform(rng, 0.0, dims.height as f64));
            let amp = cfg.nuisance_amp * normal(rng);
            blob.iter_mut().for_each(|v| *v = 0.0);
            splat_blob(&mut blob, dims, at, NUISANCE_SIGMA);
            grid.channel_mut(c).iter_mut().zip(&blob).for_each(|(p, b)| *p += amp * b);
        }
    }
    render_limbs(grid.channel_mut(appearance), dims, &keypoints, cfg.limb_sigma);
    let clean = FeatureGrid { dims, channels: appearance + 1, data: grid.data[..(appearance + 1) * n].to_vec() };
    if cfg.pixel_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.pixel_noise).map_err(|_| invalid!("bad pixel_noise"))?;
        for c in 0..appearance {
            grid.channel_mut(c).iter_mut().for_each(|v| *v += noise.sample(rng));
        }
    }
    fill_gradients(&mut grid);
    Ok(SyntheticScene { features: grid, keypoints, bbox: pose.bbox, clean, pixel_noise: cfg.pixel_noise })
}

/// Samples a pose and renders it.
pub fn generate_scene<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<SyntheticScene> {
    let pose = sample_pose(cfg, rng)?;
    render_scene(cfg, &pose, rng)
}

/// Scene `i` is drawn from stream `i` of `seed`.
pub fn generate_dataset(cfg: &SceneConfig, seed: u64, count: usize) -> Result<Vec<SyntheticScene>> {
    (0..count).map(|i| generate_scene(cfg, &mut rng::stream(seed, i as u64))).collect()
}

// Additive Gaussian blob, truncated at 4 sigma.
fn splat_blob(values: &mut [f64], dims: Dims, center: (f64, f64), sigma: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let reach = 4.0 * sigma;
    let x0 = math::floor(center.0 - reach).max(0.0) as usize;
    let y0 = math::floor(center.1 - reach).max(0.0) as usize;
    let x1 = (math::floor(center.0 + reach) + 1.0).clamp(0.0, dims.width as f64) as usize;
    let y1 = (math::floor(center.1 + reach) + 1.0).clamp(0.0, dims.height as f64) as usize;
    for y in y0..y1 {
        let dy = y as f64 - center.1;
        for x in x0..x1 {
            let dx = x as f64 - center.0;
            values[y * dims.width + x] += math::exp(-(dx * dx + dy * dy) * inv);
        }
    }
}

fn render_limbs(plane: &mut [f64], dims: Dims, kps: &KeypointSet, sigma: f64) {
    let segments: Vec<((f64, f64), (f64, f64))> = limbs(kps.len())
        .into_iter()
        .filter(|&(a, b)| kps.get(a).valid && kps.get(b).valid)
        .map(|(a, b)| ((kps.get(a).x, kps.get(a).y), (kps.get(b).x, kps.get(b).y)))
        .collect();
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in 0..dims.height {
        for x in 0..dims.width {
            let p = (x as f64, y as f64);
            let d2 = if segments.is_empty() {
                let k = kps.get(0);
                (p.0 - k.x) * (p.0 - k.x) + (p.1 - k.y) * (p.1 - k.y)
            } else {
                segments.iter().map(|&(a, b)| segment_dist2(p, a, b)).fold(f64::INFINITY, f64::min)
            };
            plane[y * dims.width + x] = math::exp(-d2 * inv);
        }
    }
}

fn segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 > 0.0 { (((p.0 - a.0) * ab.0 + (p.1 - a.1) * ab.1) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = (a.0 + t * ab.0, a.1 + t * ab.1);
    (p.0 - q.0) * (p.0 - q.0) + (p.1 - q.1) * (p.1 - q.1)
}

// Last two channels = central differences of the limb channel (third from last).
fn fill_gradients(grid: &mut FeatureGrid) {
    let dims = grid.dims;
    let c = grid.channels;
    let n = dims.len();
    let (w, h) = (dims.width, dims.height);
    let (head, grads) = grid.data.split_at_mut((c - 2) * n);
    let limb = &head[(c - 3) * n..];
    let (gx, gy) = grads.split_at_mut(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x > 0 && x + 1 < w { limb[i + 1] - limb[i - 1] } else { 0.0 };
            gy[i] = if y > 0 && y + 1 < h { limb[i + w] - limb[i - w] } else { 0.0 };
        }
    }
}

const NUISANCE_BUMPS: usize = 8;
const NUISANCE_SIGMA: f64 = 5.0;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Noise model of a simulated heatmap predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseProfile {
    /// Isotropic std-dev of the peak offset, pixels.
    pub jitter_sigma: f64,
    /// Peak amplitude bounds `[lo, hi]` within `(0, 1]`.
    pub amplitude_range: (f64, f64),
    pub distractor_prob: f64,
    pub distractor_amp: f64,
    pub miss_prob: f64,
    /// Probability that a joint's amplitude is rank-coupled to its own offset
    /// (closer peaks respond higher). Both marginals stay as specified.
    pub confidence_coupling: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            jitter_sigma: 3.0,
            amplitude_range: (0.4, 0.9),
            distractor_prob: 0.15,
            distractor_amp: 0.5,
            miss_prob: 0.0,
            confidence_coupling: 1.0,
        }
    }
}

impl NoiseProfile {
    /// Peaks exactly at ground truth with unit amplitude.
    pub fn noiseless() -> Self {
        Self {
            jitter_sigma: 0.0,
            amplitude_range: (1.0, 1.0),
            distractor_prob: 0.0,
            distractor_amp: 0.5,
            miss_prob: 0.0,
            confidence_coupling: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.amplitude_range;
        if !(self.jitter_sigma >= 0.0) || !self.jitter_sigma.is_finite() {
            return Err(invalid!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(invalid!("amplitude_range must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]"));
        }
        for (name, p) in [
            ("distractor_prob", self.distractor_prob),
            ("miss_prob", self.miss_prob),
            ("confidence_coupling", self.confidence_coupling),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.distractor_amp > 0.0 && self.distractor_amp < 1.0) {
            return Err(invalid!("distractor_amp must lie in (0, 1), got {}", self.distractor_amp));
        }
        Ok(())
    }
}

/// Heatmaps a noisy predictor would emit for ground truth `gt` on a `dims` grid.
///
/// Per valid joint: with probability `1 - miss_prob` a Gaussian of width `sigma`
/// at `gt + N(0, jitter^2 I)`; with probability `distractor_prob` a second peak of
/// height `distractor_amp` uniformly placed more than `4 sigma` from the joint.
/// Missed and invalid joints yield all-zero maps.
pub fn simulate_predictor<R: Rng + ?Sized>(
    gt: &KeypointSet,
    dims: Dims,
    profile: &NoiseProfile,
    sigma: f64,
    rng: &mut R,
) -> Result<HeatmapSet> {
    profile.validate()?;
    dims.validate()?;
    if !(sigma > 0.0) {
        return Err(invalid!("sigma must be positive, got {sigma}"));
    }
    if gt.is_empty() {
        return Err(invalid!("ground truth has no joints"));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (lo, hi) = profile.amplitude_range;
    let mut joints = Vec::with_capacity(gt.len());
    for kp in gt.points() {
        let mut values = vec![0.0; dims.len()];
        let missed = rng.random::<f64>() < profile.miss_prob;
        let ox = profile.jitter_sigma * normal.sample(rng);
        let oy = profile.jitter_sigma * normal.sample(rng);
        let coupled = rng.random::<f64>() < profile.confidence_coupling;
        let u = rng.random::<f64>();
        let distract = rng.random::<f64>() < profile.distractor_prob;
        if kp.valid && !missed {
            let amp = if coupled && profile.jitter_sigma > 0.0 {
                let s2 = profile.jitter_sigma * profile.jitter_sigma;
                let rayleigh_cdf = 1.0 - math::exp(-(ox * ox + oy * oy) / (2.0 * s2));
                hi - (hi - lo) * rayleigh_cdf
            } else {
                lo + (hi - lo) * u
            };
            splat_gaussian(&mut values, dims, (kp.x + ox, kp.y + oy), sigma, amp);
        }
        if kp.valid && distract {
            let min_d = 4.0 * sigma;
            let mut at = (0.0, 0.0);
            for _ in 0..64 {
                at = (uniform(rng, 0.0, (dims.width - 1) as f64), uniform(rng, 0.0, (dims.height - 1) as f64));
                if math::hypot(at.0 - kp.x, at.1 - kp.y) > min_d {
                    break;
                }
            }
            splat_gaussian(&mut values, dims, at, sigma, profile.distractor_amp);
        }
        joints.push(Heatmap::from_clamped(dims, values));
    }
    HeatmapSet::new(joints)
}

//! Weak/strong affine augmentation samplers and a simplified joint cutout.

use alloc::boxed::Box;
use alloc::vec::Vec;

use once_cell::race::OnceBox;
use rand::seq::index;
use rand::Rng;

use crate::affine::AffineTransform;
use crate::error::{invalid, Result};
use crate::heatmap::Dims;
use crate::keypoint::KeypointSet;
use crate::math;
use crate::synth::FeatureGrid;

/// Number of abscissae in the tabulated Beta CDF.
pub const BETA_TABLE_POINTS: usize = 4096;

/// Distribution of the isotropic scale factor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields))]
pub enum ScaleLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `lo + (hi - lo) * Beta(alpha, beta)`.
    Beta {
        alpha: f64,
        beta: f64,
        lo: f64,
        hi: f64,
    },
}

impl ScaleLaw {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ScaleLaw::Uniform { lo, hi } | ScaleLaw::Beta { lo, hi, .. } => (lo, hi),
        }
    }
}

/// Rotation range, scale law and translation jitter of one augmentation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AugmentPolicy {
    /// Rotations are drawn uniformly from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    pub scale_law: ScaleLaw,
    /// Each translation component is uniform in `[-jitter, jitter]` pixels.
    pub translation_jitter: f64,
}

impl AugmentPolicy {
    /// Rotation U[-30°, 30°], scale U[0.75, 1.25].
    pub const fn weak() -> Self {
        Self { rotation_range: 30.0, scale_law: ScaleLaw::Uniform { lo: 0.75, hi: 1.25 }, translation_jitter: 0.0 }
    }

    /// Rotation U[-60°, 60°], scale 0.5 + Beta(0.75, 0.75).
    pub const fn strong() -> Self {
        Self {
            rotation_range: 60.0,
            scale_law: ScaleLaw::Beta { alpha: 0.75, beta: 0.75, lo: 0.5, hi: 1.5 },
            translation_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_range >= 0.0) || !self.rotation_range.is_finite() {
            return Err(invalid!("rotation_range must be >= 0, got {}", self.rotation_range));
        }
        if !(self.translation_jitter >= 0.0) || !self.translation_jitter.is_finite() {
            return Err(invalid!("translation_jitter must be >= 0, got {}", self.translation_jitter));
        }
        let (lo, hi) = self.scale_law.bounds();
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid!("scale bounds need lo < hi, got [{lo}, {hi}]"));
        }
        if !(lo > 0.0) {
            return Err(invalid!("scale lower bound must be positive, got {lo}"));
        }
        if let ScaleLaw::Beta { alpha, beta, .. } = self.scale_law {
            if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                return Err(invalid!("beta shape parameters must be positive, got ({alpha}, {beta})"));
            }
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<AffineSampler> {
        self.validate()?;
        let table = match self.scale_law {
            ScaleLaw::Beta { alpha, beta, .. } => Some(BetaTable::new(alpha, beta)),
            ScaleLaw::Uniform { .. } => None,
        };
        Ok(AffineSampler { policy: *self, table })
    }

    /// Weak ranges nest inside strong ranges.
    pub fn is_within(&self, outer: &AugmentPolicy) -> bool {
        let (lo, hi) = self.scale_law.bounds();
        let (olo, ohi) = outer.scale_law.bounds();
        self.rotation_range <= outer.rotation_range
            && lo >= olo
            && hi <= ohi
            && self.translation_jitter <= outer.translation_jitter
    }
}

/// A validated policy with any lookup tables it needs.
#[derive(Debug, Clone)]
pub struct AffineSampler {
    policy: AugmentPolicy,
    table: Option<BetaTable>,
}

impl AffineSampler {
    pub fn policy(&self) -> &AugmentPolicy {
        &self.policy
    }

    /// Draws a transform about the center of a `dims` grid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dims: Dims) -> AffineTransform {
        let p = &self.policy;
        let rotation = uniform(rng, -p.rotation_range, p.rotation_range);
        let scale = match (p.scale_law, &self.table) {
            (ScaleLaw::Uniform { lo, hi }, _) => uniform(rng, lo, hi),
            (ScaleLaw::Beta { lo, hi, .. }, Some(table)) => lo + (hi - lo) * table.sample(rng),
            (ScaleLaw::Beta { .. }, None) => unreachable!("beta sampler built without table"),
        };
        let shift = if p.translation_jitter > 0.0 {
            (
                uniform(rng, -p.translation_jitter, p.translation_jitter),
                uniform(rng, -p.translation_jitter, p.translation_jitter),
            )
        } else {
            (0.0, 0.0)
        };
        AffineTransform::about_center(dims.center(), rotation, scale, shift)
            .expect("validated scale keeps the transform invertible")
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

static WEAK: OnceBox<AffineSampler> = OnceBox::new();
static STRONG: OnceBox<AffineSampler> = OnceBox::new();

/// Shared sampler for [`AugmentPolicy::weak`].
pub fn weak_sampler() -> &'static AffineSampler {
    WEAK.get_or_init(|| Box::new(AugmentPolicy::weak().sampler().expect("valid default policy")))
}

/// Shared sampler for [`AugmentPolicy::strong`]; the Beta table is built once.
pub fn strong_sampler() -> &'static AffineSampler {
    STRONG.get_or_init(|| Box::new(AugmentPolicy::strong().sampler().expect("valid default policy")))
}

pub fn sample_weak<R: Rng + ?Sized>(rng: &mut R, dims: Dims) -> AffineTransform {
    weak_sampler().sample(rng, dims)
}

pub fn sample_strong<R: Rng + ?Sized>(rng: &mut R, dims: Dims) -> AffineTransform {
    strong_sampler().sample(rng, dims)
}

/// The weak and strong samplers used together by the pipeline and the learner.
#[derive(Debug, Clone)]
pub struct Augmentation {
    pub weak: AffineSampler,
    pub strong: AffineSampler,
}

impl Augmentation {
    pub fn new(weak: &AugmentPolicy, strong: &AugmentPolicy) -> Result<Self> {
        Ok(Self { weak: weak.sampler()?, strong: strong.sampler()? })
    }
}

impl Default for Augmentation {
    fn default() -> Self {
        Self { weak: weak_sampler().clone(), strong: strong_sampler().clone() }
    }
}

/// Inverse-CDF sampler for Beta(alpha, beta) on `[0, 1]` from a tabulated CDF.
#[derive(Debug, Clone)]
pub struct BetaTable {
    cdf: Vec<f64>,
}

impl BetaTable {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let n = BETA_TABLE_POINTS;
        let mut cdf: Vec<f64> =
            (0..n).map(|i| regularized_incomplete_beta(i as f64 / (n - 1) as f64, alpha, beta)).collect();
        cdf[0] = 0.0;
        cdf[n - 1] = 1.0;
        // enforce monotonicity against rounding in the continued fraction
        for i in 1..n {
            if cdf[i] < cdf[i - 1] {
                cdf[i] = cdf[i - 1];
            }
        }
        Self { cdf }
    }

    /// Quantile for `u` in `[0, 1]`, linear between table abscissae.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.cdf.len();
        let u = u.clamp(0.0, 1.0);
        // first index with cdf > u
        let hi = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1);
        let lo = hi - 1;
        let (c0, c1) = (self.cdf[lo], self.cdf[hi]);
        let step = 1.0 / (n - 1) as f64;
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        ((lo as f64 + frac.clamp(0.0, 1.0)) * step).clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// `I_x(a, b)` via the Lentz continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::lgamma(a + b) - math::lgamma(a) - math::lgamma(b) + a * math::ln(x) + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Zeroes square patches of side `2 * radius` on `count` randomly chosen valid joints.
///
/// This is a simplified masking variant, not a reproduction of any published
/// cutout recipe. Patches are clipped at the grid border.
pub fn joint_cutout<R: Rng + ?Sized>(
    features: &FeatureGrid,
    kps: &KeypointSet,
    radius: usize,
    count: usize,
    rng: &mut R,
) -> Result<FeatureGrid> {
    if radius == 0 {
        return Err(invalid!("cutout radius must be positive"));
    }
    if count > kps.len() {
        return Err(invalid!("cutout count {count} exceeds joint count {}", kps.len()));
    }
    let mut out = features.clone();
    if count == 0 {
        return Ok(out);
    }
    let candidates: Vec<usize> = (0..kps.len()).filter(|&j| kps.get(j).valid).collect();
    let take = count.min(candidates.len());
    let dims = features.dims();
    let r = radius as i64;
    for pick in index::sample(rng, candidates.len(), take).into_iter() {
        let kp = kps.get(candidates[pick]);
        let (cx, cy) = (math::round(kp.x) as i64, math::round(kp.y) as i64);
        let x0 = (cx - r).max(0) as usize;
        let y0 = (cy - r).max(0) as usize;
        let x1 = (cx + r).clamp(0, dims.width as i64) as usize;
        let y1 = (cy + r).clamp(0, dims.height as i64) as usize;
        for ch in 0..out.channels() {
            let plane = out.channel_mut(ch);
            for y in y0..y1 {
                for x in x0..x1 {
                    plane[y * dims.width + x] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn policies_validate_and_nest() {
        assert!(AugmentPolicy::weak().validate().is_ok());
        assert!(AugmentPolicy::strong().validate().is_ok());
        assert!(AugmentPolicy::weak().is_within(&AugmentPolicy::strong()));
        assert!(!AugmentPolicy::strong().is_within(&AugmentPolicy::weak()));
    }

    #[test]
    fn invalid_policies_are_rejected() {
        let mut p = AugmentPolicy::weak();
        p.rotation_range = -1.0;
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::weak();
        p.scale_law = ScaleLaw::Uniform { lo: 1.0, hi: 1.0 };
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::strong();
        p.scale_law = ScaleLaw::Beta { alpha: 0.0, beta: 1.0, lo: 0.5, hi: 1.5 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn incomplete_beta_known_values() {
        // Beta(1,1) is uniform; Beta(2,1) has CDF x^2.
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-12);
        assert!((regularized_incomplete_beta(0.6, 2.0, 1.0) - 0.36).abs() < 1e-12);
        // symmetric law is 0.5 at the midpoint
        assert!((regularized_incomplete_beta(0.5, 0.75, 0.75) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seeded_draws_repeat() {
        let dims = Dims::new(64, 64);
        let a = sample_weak(&mut stream(3, 0), dims);
        let b = sample_weak(&mut stream(3, 0), dims);
        assert_eq!(a, b);
    }
}

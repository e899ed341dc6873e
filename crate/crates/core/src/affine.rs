//! 2x3 affine maps between the canonical frame and augmented views, plus
//! bilinear warping of grids through them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{mismatch, Error, Result};
use crate::heatmap::{Dims, Heatmap, HeatmapSet, ValidityMask};
use crate::keypoint::{Keypoint, KeypointSet};
use crate::math;

/// Minimum `|det|` of the linear part.
pub const MIN_DETERMINANT: f64 = 1e-9;

// Sampling positions this close outside the grid still count as inside.
const EDGE_EPS: f64 = 1e-9;

/// `x' = a x + b y + tx`, `y' = c x + d y + ty`, mapping canonical coords to view coords.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineTransform {
    coeffs: [f64; 6],
}

impl AffineTransform {
    /// Coefficients in row order `[a, b, tx, c, d, ty]`.
    pub fn new(coeffs: [f64; 6]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("affine coefficients must be finite".into()));
        }
        let t = Self { coeffs };
        let det = t.determinant();
        if !(det.abs() > MIN_DETERMINANT) {
            return Err(Error::SingularTransform { det });
        }
        Ok(t)
    }

    pub const fn identity() -> Self {
        Self { coeffs: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0] }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self { coeffs: [1.0, 0.0, tx, 0.0, 1.0, ty] }
    }

    /// Rotation by `degrees` and isotropic `scale` about `center`, followed by `shift`.
    pub fn about_center(center: (f64, f64), degrees: f64, scale: f64, shift: (f64, f64)) -> Result<Self> {
        let (s, c) = math::sin_cos_deg(degrees);
        let (a, b, cc, d) = (scale * c, -scale * s, scale * s, scale * c);
        let tx = center.0 - a * center.0 - b * center.1 + shift.0;
        let ty = center.1 - cc * center.0 - d * center.1 + shift.1;
        Self::new([a, b, tx, cc, d, ty])
    }

    #[inline]
    pub fn coeffs(&self) -> [f64; 6] {
        self.coeffs
    }

    #[inline]
    pub fn determinant(&self) -> f64 {
        let [a, b, _, c, d, _] = self.coeffs;
        a * d - b * c
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, tx, c, d, ty] = self.coeffs;
        (a * x + b * y + tx, c * x + d * y + ty)
    }

    pub fn apply_keypoint(&self, kp: &Keypoint) -> Keypoint {
        let (x, y) = self.apply(kp.x, kp.y);
        Keypoint { x, y, ..*kp }
    }

    /// Maps every keypoint; joints landing outside `dims` are marked invalid.
    pub fn apply_keypoints(&self, kps: &KeypointSet, dims: Dims) -> KeypointSet {
        kps.points()
            .iter()
            .map(|kp| {
                let mut out = self.apply_keypoint(kp);
                out.valid = kp.valid && dims.contains(out.x, out.y);
                out
            })
            .collect()
    }

    pub fn invert(&self) -> Result<Self> {
        let [a, b, tx, c, d, ty] = self.coeffs;
        let det = a * d - b * c;
        if !(det.abs() > MIN_DETERMINANT) {
            return Err(Error::SingularTransform { det });
        }
        let inv = 1.0 / det;
        let (ia, ib, ic, id) = (d * inv, -b * inv, -c * inv, a * inv);
        Self::new([ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)])
    }

    /// `outer ∘ inner`: apply `inner` first.
    pub fn compose(outer: &Self, inner: &Self) -> Self {
        let [a1, b1, t1, c1, d1, u1] = outer.coeffs;
        let [a2, b2, t2, c2, d2, u2] = inner.coeffs;
        Self {
            coeffs: [
                a1 * a2 + b1 * c2,
                a1 * b2 + b1 * d2,
                a1 * t2 + b1 * u2 + t1,
                c1 * a2 + d1 * c2,
                c1 * b2 + d1 * d2,
                c1 * t2 + d1 * u2 + u1,
            ],
        }
    }

    /// `sqrt(|det|)`, the isotropic scale factor for similarity transforms.
    pub fn scale(&self) -> f64 {
        math::sqrt(self.determinant().abs())
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Bilinear sample of a row-major grid. `None` outside the grid.
#[inline]
pub fn sample_bilinear(values: &[f64], dims: Dims, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (dims.width, dims.height);
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    if !(x >= -EDGE_EPS && y >= -EDGE_EPS && x <= max_x + EDGE_EPS && y <= max_y + EDGE_EPS) {
        return None;
    }
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = if w >= 2 { (x as usize).min(w - 2) } else { 0 };
    let y0 = if h >= 2 { (y as usize).min(h - 2) } else { 0 };
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = if w >= 2 { x0 + 1 } else { x0 };
    let y1 = if h >= 2 { y0 + 1 } else { y0 };
    let v00 = values[y0 * w + x0];
    let v01 = values[y0 * w + x1];
    let v10 = values[y1 * w + x0];
    let v11 = values[y1 * w + x1];
    let top = v00 * (1.0 - fx) + v01 * fx;
    let bottom = v10 * (1.0 - fx) + v11 * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Warps `channels` row-major grids of size `src` through `t` (source frame to output frame).
///
/// Output pixel `p` samples the source at `t⁻¹(p)`. Samples outside the source are 0 and
/// marked invalid in the returned mask, which is shared by all channels.
pub fn warp_channels(
    src: &[f64],
    channels: usize,
    src_dims: Dims,
    t: &AffineTransform,
    out_dims: Dims,
) -> Result<(Vec<f64>, ValidityMask)> {
    src_dims.validate()?;
    out_dims.validate()?;
    if src.len() != channels * src_dims.len() {
        return Err(mismatch!("expected {} values, got {}", channels * src_dims.len(), src.len()));
    }
    let inv = t.invert()?;
    let [a, b, tx, c, d, ty] = inv.coeffs();
    let plane = out_dims.len();
    let mut out = vec![0.0; channels * plane];
    let mut bits = vec![false; plane];
    for oy in 0..out_dims.height {
        let fy = oy as f64;
        for ox in 0..out_dims.width {
            let fx = ox as f64;
            let sx = a * fx + b * fy + tx;
            let sy = c * fx + d * fy + ty;
            let idx = oy * out_dims.width + ox;
            for ch in 0..channels {
                let plane_src = &src[ch * src_dims.len()..(ch + 1) * src_dims.len()];
                match sample_bilinear(plane_src, src_dims, sx, sy) {
                    Some(v) => out[ch * plane + idx] = v,
                    None => break,
                }
                bits[idx] = true;
            }
        }
    }
    Ok((out, ValidityMask::from_bits(out_dims, bits)?))
}

/// Bilinear warp of one heatmap; out-of-view pixels are zero and invalid.
pub fn warp_heatmap(hm: &Heatmap, t: &AffineTransform, out_dims: Dims) -> Result<(Heatmap, ValidityMask)> {
    let (values, mask) = warp_channels(hm.values(), 1, hm.dims(), t, out_dims)?;
    Ok((Heatmap::from_clamped(out_dims, clamp_unit(values)), mask))
}

/// Warps every joint of a set through the same transform.
pub fn warp_heatmap_set(set: &HeatmapSet, t: &AffineTransform, out_dims: Dims) -> Result<(HeatmapSet, ValidityMask)> {
    let j = set.num_joints();
    let src_dims = set.dims();
    let mut flat = Vec::with_capacity(j * src_dims.len());
    for hm in set.joints() {
        flat.extend_from_slice(hm.values());
    }
    let (values, mask) = warp_channels(&flat, j, src_dims, t, out_dims)?;
    let joints =
        values.chunks_exact(out_dims.len()).map(|c| Heatmap::from_clamped(out_dims, clamp_unit(c.to_vec()))).collect();
    Ok((HeatmapSet::new(joints)?, mask))
}

// Bilinear weights can overshoot [0, 1] by an ulp.
fn clamp_unit(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    v
}

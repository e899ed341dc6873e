use alloc::vec::Vec;

use crate::heatmap::Dims;

/// A decoded or ground-truth joint location in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub valid: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence, valid: true }
    }

    pub fn invalid() -> Self {
        Self { x: 0.0, y: 0.0, confidence: 0.0, valid: false }
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        crate::math::hypot(self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct KeypointSet {
    points: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(points: Vec<Keypoint>) -> Self {
        Self { points }
    }

    #[inline]
    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    #[inline]
    pub fn points_mut(&mut self) -> &mut [Keypoint] {
        &mut self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, j: usize) -> &Keypoint {
        &self.points[j]
    }

    pub fn num_valid(&self) -> usize {
        self.points.iter().filter(|p| p.valid).count()
    }

    /// Every valid joint lies inside the grid.
    pub fn inside(&self, dims: Dims) -> bool {
        self.points.iter().filter(|p| p.valid).all(|p| dims.contains(p.x, p.y))
    }

    /// Width and height of the valid joints' bounding box, padded by `margin` on every side.
    pub fn extent(&self, margin: f64) -> (f64, f64) {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.points.iter().filter(|p| p.valid) {
            lo = (lo.0.min(p.x), lo.1.min(p.y));
            hi = (hi.0.max(p.x), hi.1.max(p.y));
        }
        if lo.0 > hi.0 {
            return (2.0 * margin, 2.0 * margin);
        }
        (hi.0 - lo.0 + 2.0 * margin, hi.1 - lo.1 + 2.0 * margin)
    }
}

impl FromIterator<Keypoint> for KeypointSet {
    fn from_iter<T: IntoIterator<Item = Keypoint>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

//! Multi-view pseudo-heatmap machinery for semi-supervised keypoint estimation.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;

pub mod affine;
pub mod augment;
pub mod heatmap;
pub mod keypoint;
pub mod learner;
pub mod metrics;
pub mod pseudo;
pub mod rng;
pub mod simulate;
pub mod synth;

pub use affine::{warp_heatmap, warp_heatmap_set, AffineTransform};
pub use augment::{sample_strong, sample_weak, AugmentPolicy, Augmentation, ScaleLaw};
pub use error::{Error, Result};
pub use heatmap::{argmax_decode, render_gaussian, DecodeOptions, Dims, Heatmap, HeatmapSet, ValidityMask};
pub use keypoint::{Keypoint, KeypointSet};
pub use synth::{generate_scene, simulate_predictor, FeatureGrid, NoiseProfile, SceneConfig, SyntheticScene};

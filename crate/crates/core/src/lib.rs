//! Prior-guided difference learning for style-adapted volumetric
//! segmentation: a frozen general segmentation model plus a meta-learned
//! network that converts a handful of (prediction, corrected contour) prior
//! pairs into style-adapted segmentations for new cases, with the synthetic
//! data, training, and evaluation machinery around it.

pub mod error;
pub mod phantoms;
pub mod rng;
pub mod styles;
pub mod tensor;
pub mod volumetric;

pub use error::{DdlError, Result};

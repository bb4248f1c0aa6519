//! Deterministic synthetic-anatomy generator.
//!
//! Each case carries a target structure T plus three reference structures
//! arranged so every style transform is geometrically meaningful: organ A
//! overlaps T from above (superior), organ B sits behind it along +y
//! (posterior) with a moderate overlap, and a pair of appendage lobes C
//! straddles the target boundary on both x sides.

mod bundle;
mod generate;

pub use bundle::{read_case, read_manifest, write_case, write_manifest, DatasetManifest};
pub use generate::{generate_case, generate_dataset};

use crate::error::{DdlError, Result};
use crate::volumetric::{BinaryMask, VoxelGrid};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TARGET: &str = "target";
pub const ORGAN_A: &str = "organ_a";
pub const ORGAN_B: &str = "organ_b";
pub const APPENDAGE: &str = "appendage";

/// Parameter ranges for one ellipsoidal organ. All lengths in mm.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OrganSpec {
    /// Per-axis semi-axis range `[min, max]`.
    pub semi_axes_mm: [[f64; 2]; 3],
    /// Uniform center jitter half-width.
    pub center_jitter_mm: f64,
    /// Additive intensity contribution to the image.
    pub intensity: f32,
}

/// Required structure relations, in voxels of overlap with the target.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct OverlapRequirements {
    pub target_a: usize,
    pub target_b: usize,
    pub target_appendage: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PhantomSpec {
    pub extents: [usize; 3],
    pub spacing_mm: [f32; 3],
    pub target: OrganSpec,
    pub organ_a: OrganSpec,
    /// How deep organ A reaches down into the target along z.
    pub a_overlap_depth_mm: [f64; 2],
    pub organ_b: OrganSpec,
    /// How deep organ B reaches into the target along y.
    pub b_overlap_depth_mm: [f64; 2],
    /// Organ B center offset above the target center along z.
    pub b_center_z_offset_mm: [f64; 2],
    pub appendage: OrganSpec,
    /// Lobe centers sit at +/- this fraction of the target x semi-axis.
    pub appendage_offset_frac: f64,
    /// Lobe centers sit this far below the target center along z.
    pub appendage_drop_mm: f64,
    pub min_overlap_voxels: OverlapRequirements,
    pub noise_sigma: f32,
    pub seed: u64,
    pub max_attempts: u32,
    /// Train/val/test fractions; must sum to 1.
    pub split_fractions: [f64; 3],
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            extents: [48, 48, 32],
            spacing_mm: [2.0, 2.0, 2.0],
            target: OrganSpec {
                semi_axes_mm: [[18.0, 22.0], [18.0, 22.0], [12.0, 15.0]],
                center_jitter_mm: 3.0,
                intensity: 0.55,
            },
            organ_a: OrganSpec {
                semi_axes_mm: [[20.0, 25.0], [20.0, 25.0], [10.0, 13.0]],
                center_jitter_mm: 3.0,
                intensity: 0.30,
            },
            a_overlap_depth_mm: [16.0, 20.0],
            organ_b: OrganSpec {
                semi_axes_mm: [[14.0, 18.0], [11.0, 14.0], [13.0, 16.0]],
                center_jitter_mm: 2.0,
                intensity: 0.22,
            },
            b_overlap_depth_mm: [12.0, 16.0],
            b_center_z_offset_mm: [4.0, 8.0],
            appendage: OrganSpec {
                semi_axes_mm: [[9.0, 12.0], [8.0, 10.0], [8.0, 10.0]],
                center_jitter_mm: 1.5,
                intensity: 0.16,
            },
            appendage_offset_frac: 0.75,
            appendage_drop_mm: 5.0,
            min_overlap_voxels: OverlapRequirements {
                target_a: 250,
                target_b: 60,
                target_appendage: 120,
            },
            noise_sigma: 0.02,
            seed: 0,
            max_attempts: 100,
            split_fractions: [0.7, 0.1, 0.2],
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.extents.iter().any(|&e| e < 4) {
            return Err(DdlError::Config(
                "phantom extents must be at least 4 voxels per axis".into(),
            ));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(DdlError::Config("phantom spacing must be positive".into()));
        }
        for (name, organ) in [
            ("target", &self.target),
            ("organ_a", &self.organ_a),
            ("organ_b", &self.organ_b),
            ("appendage", &self.appendage),
        ] {
            for axis in organ.semi_axes_mm {
                if !(axis[0] > 0.0) || axis[1] < axis[0] {
                    return Err(DdlError::Config(format!(
                        "{name}: semi-axis range {axis:?} must be positive and ordered"
                    )));
                }
            }
        }
        let total: f64 = self.split_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|&f| f < 0.0) {
            return Err(DdlError::Config(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split_fractions
            )));
        }
        if self.max_attempts == 0 {
            return Err(DdlError::Config("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// Drawn parameters of one ellipsoid, recorded in the case metadata.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OrganDraw {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CaseMeta {
    pub id: String,
    pub seed: u64,
    pub index: usize,
    pub attempts: u32,
    pub organs: BTreeMap<String, OrganDraw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// One synthetic patient.
#[derive(Clone, Debug)]
pub struct Case {
    pub meta: CaseMeta,
    pub image: VoxelGrid,
    pub structures: BTreeMap<String, BinaryMask>,
    /// Frozen general-model prediction, filled in after pretraining.
    pub general_prediction: Option<BinaryMask>,
}

impl Case {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn structure(&self, name: &str) -> Result<&BinaryMask> {
        self.structures.get(name).ok_or_else(|| {
            DdlError::InvalidArgument(format!(
                "case {} has no structure named {name}",
                self.meta.id
            ))
        })
    }

    pub fn target(&self) -> &BinaryMask {
        self.structures
            .get(TARGET)
            .expect("every generated case has a target")
    }

    pub fn prediction(&self) -> Result<&BinaryMask> {
        self.general_prediction.as_ref().ok_or_else(|| {
            DdlError::InvalidArgument(format!(
                "case {} has no cached general-model prediction",
                self.meta.id
            ))
        })
    }
}

/// Contiguous index ranges per split.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplits {
    pub fn from_fractions(n: usize, fractions: [f64; 3]) -> Self {
        let n_train = (n as f64 * fractions[0]).round() as usize;
        let n_val = (n as f64 * fractions[1]).round() as usize;
        let n_train = n_train.min(n);
        let n_val = n_val.min(n - n_train);
        DatasetSplits {
            train: (0..n_train).collect(),
            val: (n_train..n_train + n_val).collect(),
            test: (n_train + n_val..n).collect(),
        }
    }
}

//! The default style library: training augmentations over the synthetic
//! anatomy plus the six held-out test styles.

use super::{RefQuantifier, StyleFamily, StyleLibrary, StyleOp, StylePipeline};
use crate::error::Result;
use crate::phantoms::{APPENDAGE, ORGAN_A, ORGAN_B};
use crate::volumetric::{Axis, Side};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StyleLibraryConfig {
    /// Per-episode dilation/erosion radii; each radius becomes one concrete
    /// training pipeline.
    pub dilate_radii_mm: Vec<f64>,
    pub erode_radii_mm: Vec<f64>,
    pub extend_into_a_mm: f64,
    pub extend_into_b_mm: f64,
    /// Held-out: penetration cap into organ A.
    pub limit_into_a_mm: f64,
}

impl Default for StyleLibraryConfig {
    fn default() -> Self {
        StyleLibraryConfig {
            dilate_radii_mm: vec![2.0, 4.0, 6.0],
            erode_radii_mm: vec![2.0, 4.0, 6.0],
            extend_into_a_mm: 30.0,
            extend_into_b_mm: 20.0,
            limit_into_a_mm: 10.0,
        }
    }
}

/// Deterministic library construction from the configuration.
pub fn build_library(cfg: &StyleLibraryConfig) -> Result<StyleLibrary> {
    let mut train = Vec::new();
    for &r in &cfg.dilate_radii_mm {
        train.push(StylePipeline::new(
            format!("dilate_{r}mm"),
            StyleFamily::Train,
            vec![StyleOp::Dilate { radius_mm: r }],
        )?);
    }
    for &r in &cfg.erode_radii_mm {
        train.push(StylePipeline::new(
            format!("erode_{r}mm"),
            StyleFamily::Train,
            vec![StyleOp::Erode { radius_mm: r }],
        )?);
    }
    train.push(StylePipeline::new(
        "exclude_organ_a",
        StyleFamily::Train,
        vec![StyleOp::Exclude {
            reference: ORGAN_A.into(),
        }],
    )?);
    train.push(StylePipeline::new(
        "extend_into_organ_a",
        StyleFamily::Train,
        vec![StyleOp::ExtendInto {
            reference: ORGAN_A.into(),
            depth_mm: cfg.extend_into_a_mm,
        }],
    )?);
    train.push(StylePipeline::new(
        "extend_into_organ_b",
        StyleFamily::Train,
        vec![StyleOp::ExtendInto {
            reference: ORGAN_B.into(),
            depth_mm: cfg.extend_into_b_mm,
        }],
    )?);
    train.push(StylePipeline::new(
        "slices_with_a_and_b",
        StyleFamily::Train,
        vec![StyleOp::RestrictSlicesWith {
            references: vec![ORGAN_A.into(), ORGAN_B.into()],
            quantifier: RefQuantifier::All,
        }],
    )?);
    train.push(StylePipeline::new(
        "slices_with_a",
        StyleFamily::Train,
        vec![StyleOp::RestrictSlicesWith {
            references: vec![ORGAN_A.into()],
            quantifier: RefQuantifier::All,
        }],
    )?);
    train.push(StylePipeline::new(
        "slices_without_a_or_b",
        StyleFamily::Train,
        vec![StyleOp::RestrictSlicesWithout {
            references: vec![ORGAN_A.into(), ORGAN_B.into()],
        }],
    )?);

    let held_out = vec![
        StylePipeline::new(
            "limit_into_organ_a",
            StyleFamily::HeldOutTest,
            vec![StyleOp::LimitInto {
                reference: ORGAN_A.into(),
                depth_mm: cfg.limit_into_a_mm,
            }],
        )?,
        StylePipeline::new(
            "union_upper_organ_b",
            StyleFamily::HeldOutTest,
            vec![StyleOp::UnionWithHalf {
                reference: ORGAN_B.into(),
                axis: Axis::Z,
                side: Side::High,
            }],
        )?,
        StylePipeline::new(
            "remove_appendage",
            StyleFamily::HeldOutTest,
            vec![StyleOp::RemoveAppendage {
                reference: APPENDAGE.into(),
            }],
        )?,
        StylePipeline::new(
            "half_keep_z_high",
            StyleFamily::HeldOutTest,
            vec![StyleOp::HalfKeep {
                axis: Axis::Z,
                side: Side::High,
            }],
        )?,
        StylePipeline::new(
            "half_keep_y_high",
            StyleFamily::HeldOutTest,
            vec![StyleOp::HalfKeep {
                axis: Axis::Y,
                side: Side::High,
            }],
        )?,
        StylePipeline::new(
            "half_keep_x_high",
            StyleFamily::HeldOutTest,
            vec![StyleOp::HalfKeep {
                axis: Axis::X,
                side: Side::High,
            }],
        )?,
    ];

    let library = StyleLibrary { train, held_out };
    library.validate()?;
    Ok(library)
}

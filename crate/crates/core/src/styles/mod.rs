//! The style-simulation algebra: composable mask transforms that convert a
//! whole-structure ground truth into a stylized ground truth, covering both
//! the training augmentations and the held-out test styles.

mod library;

pub use library::{build_library, StyleLibraryConfig};

use crate::error::{DdlError, Result};
use crate::phantoms::Case;
use crate::volumetric::{combine, dilate, erode, half_keep, slice_presence, Axis, BinaryMask, Plane, SetOp, Side};
use serde::{Deserialize, Serialize};

/// Slice-restriction quantifier: every listed reference present, or any.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefQuantifier {
    All,
    Any,
}

/// One composable mask transform. Reference structures are named; radii and
/// depths are in mm.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StyleOp {
    Dilate { radius_mm: f64 },
    Erode { radius_mm: f64 },
    /// T ∪ (R ∩ dilate(T, d)): grow into the reference up to a depth.
    ExtendInto { reference: String, depth_mm: f64 },
    /// (T\R) ∪ (T ∩ R ∩ dilate(T\R, d)): cap the penetration into R at d.
    LimitInto { reference: String, depth_mm: f64 },
    /// T\R.
    Exclude { reference: String },
    /// T ∪ half_keep(R, axis, side), plane at R's centroid.
    UnionWithHalf { reference: String, axis: Axis, side: Side },
    /// Keep T only on slices where the references are present.
    RestrictSlicesWith { references: Vec<String>, quantifier: RefQuantifier },
    /// Keep T only on slices where none of the references are present.
    RestrictSlicesWithout { references: Vec<String> },
    /// Keep one side of the working mask, plane at its own centroid.
    HalfKeep { axis: Axis, side: Side },
    /// T\R for an appendage reference.
    RemoveAppendage { reference: String },
}

impl StyleOp {
    pub fn validate(&self) -> Result<()> {
        let check = |v: f64, what: &str| {
            if !(v >= 0.0) || !v.is_finite() {
                Err(DdlError::InvalidArgument(format!(
                    "{what} must be a finite non-negative length, got {v}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            StyleOp::Dilate { radius_mm } | StyleOp::Erode { radius_mm } => {
                check(*radius_mm, "style radius")
            }
            StyleOp::ExtendInto { depth_mm, .. } | StyleOp::LimitInto { depth_mm, .. } => {
                check(*depth_mm, "style depth")
            }
            StyleOp::RestrictSlicesWith { references, .. }
            | StyleOp::RestrictSlicesWithout { references } => {
                if references.is_empty() {
                    return Err(DdlError::InvalidArgument(
                        "slice restriction requires at least one reference".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn referenced(&self) -> Vec<&str> {
        match self {
            StyleOp::ExtendInto { reference, .. }
            | StyleOp::LimitInto { reference, .. }
            | StyleOp::Exclude { reference }
            | StyleOp::UnionWithHalf { reference, .. }
            | StyleOp::RemoveAppendage { reference } => vec![reference],
            StyleOp::RestrictSlicesWith { references, .. } => {
                references.iter().map(|s| s.as_str()).collect()
            }
            StyleOp::RestrictSlicesWithout { references } => {
                references.iter().map(|s| s.as_str()).collect()
            }
            _ => Vec::new(),
        }
    }

    fn apply(&self, working: &BinaryMask, case: &Case) -> Result<BinaryMask> {
        match self {
            StyleOp::Dilate { radius_mm } => dilate(working, *radius_mm),
            StyleOp::Erode { radius_mm } => erode(working, *radius_mm),
            StyleOp::ExtendInto {
                reference,
                depth_mm,
            } => {
                let r = case.structure(reference)?;
                let reach = dilate(working, *depth_mm)?;
                let gained = combine(r, &reach, SetOp::Intersect)?;
                combine(working, &gained, SetOp::Union)
            }
            StyleOp::LimitInto {
                reference,
                depth_mm,
            } => {
                let r = case.structure(reference)?;
                let outside = combine(working, r, SetOp::Minus)?;
                let inside = combine(working, r, SetOp::Intersect)?;
                let allowed = combine(&inside, &dilate(&outside, *depth_mm)?, SetOp::Intersect)?;
                combine(&outside, &allowed, SetOp::Union)
            }
            StyleOp::Exclude { reference } | StyleOp::RemoveAppendage { reference } => {
                combine(working, case.structure(reference)?, SetOp::Minus)
            }
            StyleOp::UnionWithHalf {
                reference,
                axis,
                side,
            } => {
                let r = case.structure(reference)?;
                let half = half_keep(r, *axis, *side, Plane::Centroid)?;
                combine(working, &half, SetOp::Union)
            }
            StyleOp::RestrictSlicesWith {
                references,
                quantifier,
            } => {
                let presence = reference_presence(case, references)?;
                let keep: Vec<bool> = match quantifier {
                    RefQuantifier::All => (0..presence[0].len())
                        .map(|z| presence.iter().all(|p| p[z]))
                        .collect(),
                    RefQuantifier::Any => (0..presence[0].len())
                        .map(|z| presence.iter().any(|p| p[z]))
                        .collect(),
                };
                restrict_to_slices(working, &keep)
            }
            StyleOp::RestrictSlicesWithout { references } => {
                let presence = reference_presence(case, references)?;
                let keep: Vec<bool> = (0..presence[0].len())
                    .map(|z| presence.iter().all(|p| !p[z]))
                    .collect();
                restrict_to_slices(working, &keep)
            }
            StyleOp::HalfKeep { axis, side } => {
                if working.is_empty() {
                    // Nothing to split; the empty mask is already its half.
                    return Ok(working.clone());
                }
                half_keep(working, *axis, *side, Plane::Centroid)
            }
        }
    }
}

fn reference_presence(case: &Case, references: &[String]) -> Result<Vec<Vec<bool>>> {
    references
        .iter()
        .map(|name| Ok(slice_presence(case.structure(name)?)))
        .collect()
}

fn restrict_to_slices(mask: &BinaryMask, keep: &[bool]) -> Result<BinaryMask> {
    let geometry = *mask.geometry();
    let [dx, dy, _] = geometry.extents;
    let per_slice = dx * dy;
    let mut values = mask.values().to_vec();
    for (z, &k) in keep.iter().enumerate() {
        if !k {
            values[z * per_slice..(z + 1) * per_slice].fill(false);
        }
    }
    BinaryMask::new(geometry, values)
}

/// Family tag separating training augmentations from held-out test styles.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleFamily {
    Train,
    HeldOutTest,
}

/// Ordered, deterministic sequence of style operators.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct StylePipeline {
    pub name: String,
    pub family: StyleFamily,
    pub ops: Vec<StyleOp>,
}

impl StylePipeline {
    pub fn new(name: impl Into<String>, family: StyleFamily, ops: Vec<StyleOp>) -> Result<Self> {
        let pipeline = StylePipeline {
            name: name.into(),
            family,
            ops,
        };
        pipeline.validate()?;
        Ok(pipeline)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(DdlError::InvalidArgument(format!(
                "style pipeline {} has no operators",
                self.name
            )));
        }
        for op in &self.ops {
            op.validate()?;
        }
        Ok(())
    }

    /// Structural equality ignoring the name: same operator sequence.
    pub fn same_ops(&self, other: &StylePipeline) -> bool {
        self.ops == other.ops
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pipeline: StylePipeline = serde_json::from_str(text)?;
        pipeline.validate()?;
        Ok(pipeline)
    }
}

/// Apply a pipeline to a named target structure of a case, left to right.
/// An empty result is permitted and returned as-is.
pub fn apply_style(pipeline: &StylePipeline, case: &Case, target_name: &str) -> Result<BinaryMask> {
    pipeline.validate()?;
    for op in &pipeline.ops {
        for reference in op.referenced() {
            if !case.structures.contains_key(reference) {
                return Err(DdlError::InvalidArgument(format!(
                    "style {}: case {} has no structure named {reference}",
                    pipeline.name,
                    case.id()
                )));
            }
        }
    }
    let mut working = case.structure(target_name)?.clone();
    for op in &pipeline.ops {
        working = op.apply(&working, case)?;
    }
    Ok(working)
}

/// Train pipelines plus held-out test pipelines, disjoint by construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StyleLibrary {
    pub train: Vec<StylePipeline>,
    pub held_out: Vec<StylePipeline>,
}

impl StyleLibrary {
    pub fn validate(&self) -> Result<()> {
        for p in self.train.iter().chain(self.held_out.iter()) {
            p.validate()?;
        }
        for train in &self.train {
            if let Some(clash) = self.held_out.iter().find(|h| h.same_ops(train)) {
                return Err(DdlError::InvalidArgument(format!(
                    "style library leak: train pipeline {} equals held-out {}",
                    train.name, clash.name
                )));
            }
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&StylePipeline> {
        self.train
            .iter()
            .chain(self.held_out.iter())
            .find(|p| p.name == name)
    }
}

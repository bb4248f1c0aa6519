//! Metric morphology: dilation and erosion by a physical radius in mm.

use super::edt::edt_squared;
use super::BinaryMask;
use crate::error::{DdlError, Result};

fn check_radius(radius_mm: f64) -> Result<()> {
    if !(radius_mm >= 0.0) || !radius_mm.is_finite() {
        return Err(DdlError::InvalidArgument(format!(
            "morphology radius must be a finite non-negative length, got {radius_mm}"
        )));
    }
    Ok(())
}

/// Voxels whose center lies within `radius_mm` (anisotropic Euclidean) of any
/// foreground voxel center. `dilate(m, 0) == m`.
pub fn dilate(mask: &BinaryMask, radius_mm: f64) -> Result<BinaryMask> {
    check_radius(radius_mm)?;
    let r2 = radius_mm * radius_mm;
    let d2 = edt_squared(mask);
    let values = d2.iter().map(|&d| d <= r2).collect();
    BinaryMask::new(*mask.geometry(), values)
}

/// Dual of dilation: `erode(m, r) = complement(dilate(complement(m), r))`.
pub fn erode(mask: &BinaryMask, radius_mm: f64) -> Result<BinaryMask> {
    check_radius(radius_mm)?;
    Ok(dilate(&mask.complement(), radius_mm)?.complement())
}

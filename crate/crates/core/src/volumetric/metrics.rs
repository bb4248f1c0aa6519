//! Overlap and boundary-distance metrics between binary masks.

use super::edt::edt_squared;
use super::BinaryMask;
use crate::error::{DdlError, Result};

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`; two empty masks agree
/// perfectly and score 1.0.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.geometry().ensure_matches(b.geometry(), "dsc")?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.values().iter().zip(b.values().iter()) {
        inter += (x & y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Symmetric percentile Hausdorff distance (mm) over foreground voxel
/// centers: the maximum of the two directed nearest-rank percentiles.
/// `percentile = 100` is the classical Hausdorff distance.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask, percentile: f64) -> Result<f64> {
    a.geometry().ensure_matches(b.geometry(), "hausdorff")?;
    if a.is_empty() || b.is_empty() {
        return Err(DdlError::InvalidArgument(
            "hausdorff distance requires two non-empty masks".into(),
        ));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(DdlError::InvalidArgument(format!(
            "hausdorff percentile must be in (0, 100], got {percentile}"
        )));
    }
    let dir_ab = directed_distances(a, b);
    let dir_ba = directed_distances(b, a);
    Ok(nearest_rank(dir_ab, percentile).max(nearest_rank(dir_ba, percentile)))
}

/// Distances from every foreground voxel of `from` to the nearest foreground
/// voxel of `to`.
fn directed_distances(from: &BinaryMask, to: &BinaryMask) -> Vec<f64> {
    let d2 = edt_squared(to);
    from.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| d2[i].sqrt())
        .collect()
}

/// Nearest-rank percentile of an unsorted non-empty sample.
fn nearest_rank(mut sample: Vec<f64>, percentile: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sample[rank - 1]
}

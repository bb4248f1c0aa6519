//! 3-D scalar grids and binary masks with physical voxel spacing, plus the
//! mask algebra the style simulation and the losses are built on.
//!
//! Layout is x-fastest: `index = x + dx * (y + dy * z)`. All distances are in
//! millimetres, measured voxel center to voxel center with anisotropic
//! spacing.

mod edt;
mod metrics;
mod morphology;
pub mod volg;

pub use edt::{boundary_distance, edt, edt_squared};
pub use metrics::{dsc, hausdorff};
pub use morphology::{dilate, erode};

use crate::error::{DdlError, Result};
use serde::{Deserialize, Serialize};

/// Grid extents in voxels and spacing in mm per voxel.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Geometry {
    /// Voxel counts `(dx, dy, dz)`.
    pub extents: [usize; 3],
    /// Millimetres per voxel `(sx, sy, sz)`.
    pub spacing: [f32; 3],
}

impl Geometry {
    pub fn new(extents: [usize; 3], spacing: [f32; 3]) -> Result<Self> {
        let g = Geometry { extents, spacing };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extents.iter().any(|&e| e == 0) {
            return Err(DdlError::GeometryMismatch(
                "grid extents must be positive".into(),
            ));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(DdlError::GeometryMismatch(
                "voxel spacing must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.extents.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.extents[0] * (y + self.extents[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [dx, dy, _] = self.extents;
        [index % dx, (index / dx) % dy, index / (dx * dy)]
    }

    pub fn ensure_matches(&self, other: &Geometry, what: &str) -> Result<()> {
        if self != other {
            return Err(DdlError::GeometryMismatch(format!(
                "{what}: {:?}@{:?} vs {:?}@{:?}",
                self.extents, self.spacing, other.extents, other.spacing
            )));
        }
        Ok(())
    }
}

/// 3-D scalar grid.
#[derive(Clone, PartialEq, Debug)]
pub struct Volume<T> {
    geometry: Geometry,
    values: Vec<T>,
}

/// The image type: f32 voxels.
pub type VoxelGrid = Volume<f32>;

impl<T: Copy> Volume<T> {
    pub fn new(geometry: Geometry, values: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.voxel_count() {
            return Err(DdlError::GeometryMismatch(format!(
                "value count {} does not match extents {:?}",
                values.len(),
                geometry.extents
            )));
        }
        Ok(Volume { geometry, values })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        let n = geometry.voxel_count();
        Volume::new(geometry, vec![value; n])
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> T {
        self.values[self.geometry.index(x, y, z)]
    }
}

/// 3-D boolean mask sharing the grid conventions of [`Volume`].
#[derive(Clone, PartialEq, Debug)]
pub struct BinaryMask {
    geometry: Geometry,
    values: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SetOp {
    Union,
    Intersect,
    Minus,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Low,
    High,
}

/// Splitting plane for [`half_keep`], in voxel-index units along the axis.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Centroid,
    Coordinate(f64),
}

impl BinaryMask {
    pub fn new(geometry: Geometry, values: Vec<bool>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.voxel_count() {
            return Err(DdlError::GeometryMismatch(format!(
                "mask value count {} does not match extents {:?}",
                values.len(),
                geometry.extents
            )));
        }
        Ok(BinaryMask { geometry, values })
    }

    pub fn empty(geometry: Geometry) -> Result<Self> {
        let n = geometry.voxel_count();
        BinaryMask::new(geometry, vec![false; n])
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        geometry.validate()?;
        let [dx, dy, dz] = geometry.extents;
        let mut values = Vec::with_capacity(geometry.voxel_count());
        for z in 0..dz {
            for y in 0..dy {
                for x in 0..dx {
                    values.push(f(x, y, z));
                }
            }
        }
        BinaryMask::new(geometry, values)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.geometry.index(x, y, z);
        self.values[i] = value;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            geometry: self.geometry,
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    /// Foreground voxel coordinates in scan order.
    pub fn foreground(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| self.geometry.coords(i))
    }

    /// Mean foreground coordinate per axis, in voxel-index units.
    pub fn centroid(&self) -> Result<[f64; 3]> {
        let mut acc = [0f64; 3];
        let mut n = 0usize;
        for [x, y, z] in self.foreground() {
            acc[0] += x as f64;
            acc[1] += y as f64;
            acc[2] += z as f64;
            n += 1;
        }
        if n == 0 {
            return Err(DdlError::InvalidArgument(
                "centroid of an empty mask is undefined".into(),
            ));
        }
        Ok([acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64])
    }

    /// Probabilities-style f32 view (1.0 foreground / 0.0 background).
    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }
}

/// Elementwise boolean set operation over matching geometry.
pub fn combine(a: &BinaryMask, b: &BinaryMask, op: SetOp) -> Result<BinaryMask> {
    a.geometry.ensure_matches(&b.geometry, "combine")?;
    let values = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(&x, &y)| match op {
            SetOp::Union => x | y,
            SetOp::Intersect => x & y,
            SetOp::Minus => x & !y,
        })
        .collect();
    Ok(BinaryMask {
        geometry: a.geometry,
        values,
    })
}

/// Per-z-slice foreground presence.
pub fn slice_presence(m: &BinaryMask) -> Vec<bool> {
    let [dx, dy, dz] = m.geometry.extents;
    let per_slice = dx * dy;
    (0..dz)
        .map(|z| m.values[z * per_slice..(z + 1) * per_slice].iter().any(|&v| v))
        .collect()
}

/// Keep the part of the mask on one side of an axis-aligned plane.
///
/// The plane coordinate is in voxel-index units; `Plane::Centroid` uses the
/// mask's own foreground centroid. Voxels exactly on the plane go to
/// `Side::High`.
pub fn half_keep(m: &BinaryMask, axis: Axis, side: Side, plane: Plane) -> Result<BinaryMask> {
    let plane_coord = match plane {
        Plane::Coordinate(c) => c,
        Plane::Centroid => {
            if m.is_empty() {
                return Err(DdlError::InvalidArgument(
                    "half_keep with a centroid plane requires a non-empty mask".into(),
                ));
            }
            m.centroid()?[axis.index()]
        }
    };
    let ai = axis.index();
    let geometry = m.geometry;
    let mut values = vec![false; m.values.len()];
    for (i, &v) in m.values.iter().enumerate() {
        if !v {
            continue;
        }
        let coord = geometry.coords(i)[ai] as f64;
        let keep = match side {
            Side::Low => coord < plane_coord,
            Side::High => coord >= plane_coord,
        };
        values[i] = keep;
    }
    Ok(BinaryMask { geometry, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn geom(extents: [usize; 3]) -> Geometry {
        Geometry::new(extents, [1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn combine_matches_elementwise_enumeration() {
        let g = geom([3, 3, 2]);
        let a = BinaryMask::from_fn(g, |x, y, z| (x + y + z) % 2 == 0).unwrap();
        let b = BinaryMask::from_fn(g, |x, _, _| x > 0).unwrap();
        for (op, f) in [
            (SetOp::Union, (|p: bool, q: bool| p | q) as fn(bool, bool) -> bool),
            (SetOp::Intersect, |p, q| p & q),
            (SetOp::Minus, |p, q| p & !q),
        ] {
            let c = combine(&a, &b, op).unwrap();
            for (i, &v) in c.values().iter().enumerate() {
                assert_eq!(v, f(a.values()[i], b.values()[i]), "{op:?} at {i}");
            }
        }
        assert_eq!(combine(&a, &BinaryMask::empty(g).unwrap(), SetOp::Minus).unwrap(), a);
        assert_eq!(combine(&a, &a, SetOp::Intersect).unwrap(), a);
    }

    #[test]
    fn combine_rejects_geometry_mismatch() {
        let a = BinaryMask::empty(geom([3, 3, 3])).unwrap();
        let b = BinaryMask::empty(geom([3, 3, 2])).unwrap();
        assert!(combine(&a, &b, SetOp::Union).is_err());
        let c = BinaryMask::empty(Geometry::new([3, 3, 3], [1.0, 1.0, 2.0]).unwrap()).unwrap();
        assert!(combine(&a, &c, SetOp::Union).is_err());
    }

    #[test]
    fn slice_presence_enumerates_slices() {
        let g = geom([4, 4, 8]);
        let empty = BinaryMask::empty(g).unwrap();
        assert!(slice_presence(&empty).iter().all(|&p| !p));

        let m = BinaryMask::from_fn(g, |_, _, z| (3..=5).contains(&z)).unwrap();
        let presence = slice_presence(&m);
        for (z, &p) in presence.iter().enumerate() {
            assert_eq!(p, (3..=5).contains(&z), "slice {z}");
        }

        let b = BinaryMask::from_fn(g, |_, _, z| z == 7).unwrap();
        let u = combine(&m, &b, SetOp::Union).unwrap();
        let lhs = slice_presence(&u);
        let rhs: Vec<bool> = slice_presence(&m)
            .iter()
            .zip(slice_presence(&b).iter())
            .map(|(&p, &q)| p | q)
            .collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn half_keep_slab_centroid_keeps_upper_half() {
        // 4-slice slab: centroid z = 1.5, high side = slices 2 and 3.
        let g = geom([3, 3, 4]);
        let slab = BinaryMask::from_fn(g, |_, _, _| true).unwrap();
        let high = half_keep(&slab, Axis::Z, Side::High, Plane::Centroid).unwrap();
        for [_, _, z] in high.foreground() {
            assert!(z >= 2);
        }
        assert_eq!(high.count(), 2 * 9);

        let low = half_keep(&slab, Axis::Z, Side::Low, Plane::Centroid).unwrap();
        let both = combine(&low, &high, SetOp::Union).unwrap();
        assert_eq!(both, slab, "low and high partition the mask");
        assert!(combine(&low, &high, SetOp::Intersect).unwrap().is_empty());
    }

    #[test]
    fn half_keep_plane_ties_go_high() {
        let g = geom([5, 1, 1]);
        let m = BinaryMask::from_fn(g, |_, _, _| true).unwrap();
        // Centroid x = 2.0 exactly; the x == 2 voxel belongs to the high side.
        let high = half_keep(&m, Axis::X, Side::High, Plane::Centroid).unwrap();
        let xs: Vec<usize> = high.foreground().map(|c| c[0]).collect();
        assert_eq!(xs, vec![2, 3, 4]);
        let low = half_keep(&m, Axis::X, Side::Low, Plane::Centroid).unwrap();
        let xs: Vec<usize> = low.foreground().map(|c| c[0]).collect();
        assert_eq!(xs, vec![0, 1]);
    }

    #[test]
    fn half_keep_empty_mask_with_centroid_rejected() {
        let m = BinaryMask::empty(geom([2, 2, 2])).unwrap();
        assert!(half_keep(&m, Axis::Z, Side::High, Plane::Centroid).is_err());
        // Explicit coordinate still works on an empty mask.
        assert!(half_keep(&m, Axis::Z, Side::High, Plane::Coordinate(0.5))
            .unwrap()
            .is_empty());
    }
}

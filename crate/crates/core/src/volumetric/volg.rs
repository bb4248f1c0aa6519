//! "VOLG" volume/mask file format.
//!
//! Layout: magic "VOLG", version u32 = 1, dtype u8 (0 = boolean stored as u8,
//! 1 = f32), extents 3 x u32, spacing 3 x f32 (mm), then raw little-endian
//! voxels, x-fastest then y then z. Round-trips are bit-exact.

use super::{BinaryMask, Geometry, VoxelGrid};
use crate::error::{DdlError, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VOLG";
const VERSION: u32 = 1;
const DTYPE_BOOL: u8 = 0;
const DTYPE_F32: u8 = 1;

/// Either payload a VOLG file can carry.
pub enum VolgData {
    Mask(BinaryMask),
    Grid(VoxelGrid),
}

fn write_header(w: &mut impl Write, dtype: u8, geometry: &Geometry) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[dtype])?;
    for e in geometry.extents {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    for s in geometry.spacing {
        w.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DdlError::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    (|| {
        write_header(&mut w, DTYPE_BOOL, mask.geometry())?;
        for &v in mask.values() {
            w.write_all(&[u8::from(v)])?;
        }
        w.flush()
    })()
    .map_err(|e| DdlError::io(path.display(), e))
}

pub fn write_grid(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DdlError::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    (|| {
        write_header(&mut w, DTYPE_F32, grid.geometry())?;
        for &v in grid.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    })()
    .map_err(|e| DdlError::io(path.display(), e))
}

pub fn read(path: &Path) -> Result<VolgData> {
    let file = std::fs::File::open(path).map_err(|e| DdlError::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let fail = |reason: String| DdlError::Format {
        path: path.display().to_string(),
        reason,
    };
    let io_err = |e| DdlError::io(path.display(), e);

    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(io_err)?;
    if &buf4 != MAGIC {
        return Err(fail(format!("bad magic {buf4:?}")));
    }
    r.read_exact(&mut buf4).map_err(io_err)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype).map_err(io_err)?;
    let mut extents = [0usize; 3];
    for e in extents.iter_mut() {
        r.read_exact(&mut buf4).map_err(io_err)?;
        *e = u32::from_le_bytes(buf4) as usize;
    }
    let mut spacing = [0f32; 3];
    for s in spacing.iter_mut() {
        r.read_exact(&mut buf4).map_err(io_err)?;
        *s = f32::from_le_bytes(buf4);
    }
    let geometry = Geometry::new(extents, spacing)
        .map_err(|e| fail(format!("invalid geometry: {e}")))?;
    let n = geometry.voxel_count();
    match dtype[0] {
        DTYPE_BOOL => {
            let mut raw = vec![0u8; n];
            r.read_exact(&mut raw).map_err(io_err)?;
            if let Some(bad) = raw.iter().find(|&&b| b > 1) {
                return Err(fail(format!("boolean voxel out of range: {bad}")));
            }
            Ok(VolgData::Mask(BinaryMask::new(
                geometry,
                raw.into_iter().map(|b| b == 1).collect(),
            )?))
        }
        DTYPE_F32 => {
            let mut values = vec![0f32; n];
            for v in values.iter_mut() {
                r.read_exact(&mut buf4).map_err(io_err)?;
                *v = f32::from_le_bytes(buf4);
            }
            Ok(VolgData::Grid(VoxelGrid::new(geometry, values)?))
        }
        other => Err(fail(format!("unknown dtype {other}"))),
    }
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    match read(path)? {
        VolgData::Mask(m) => Ok(m),
        VolgData::Grid(_) => Err(DdlError::Format {
            path: path.display().to_string(),
            reason: "expected a boolean mask, found an f32 grid".into(),
        }),
    }
}

pub fn read_grid(path: &Path) -> Result<VoxelGrid> {
    match read(path)? {
        VolgData::Grid(g) => Ok(g),
        VolgData::Mask(_) => Err(DdlError::Format {
            path: path.display().to_string(),
            reason: "expected an f32 grid, found a boolean mask".into(),
        }),
    }
}

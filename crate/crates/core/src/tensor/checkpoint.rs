//! Parameter checkpoint files.
//!
//! Values file ("DDLP"): magic, version u32, entry count u32, then per entry
//! name length u32 + UTF-8 name + rank u32 + extents (u32 each) + raw 32-bit
//! little-endian values. Optimizer moments live in a sibling file with magic
//! "DDLM" and the same layout, holding `<name>#m`, `<name>#v` and a
//! one-element `<name>#t` step entry per parameter.

use super::scalar::Scalar;
use super::store::{Param, ParameterStore};
use super::Shape;
use crate::error::{DdlError, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC_PARAMS: &[u8; 4] = b"DDLP";
const MAGIC_MOMENTS: &[u8; 4] = b"DDLM";
const VERSION: u32 = 1;

struct Entry {
    name: String,
    shape: Shape,
    values: Vec<f32>,
}

fn write_file(path: &Path, magic: &[u8; 4], entries: &[Entry]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DdlError::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| DdlError::io(path.display(), e);
    w.write_all(magic).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for e in entries {
        w.write_all(&(e.name.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(e.name.as_bytes()).map_err(io_err)?;
        w.write_all(&(e.shape.rank() as u32).to_le_bytes())
            .map_err(io_err)?;
        for d in e.shape.dims() {
            w.write_all(&(*d as u32).to_le_bytes()).map_err(io_err)?;
        }
        for v in &e.values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_file(path: &Path, magic: &[u8; 4]) -> Result<Vec<Entry>> {
    let file = std::fs::File::open(path).map_err(|e| DdlError::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let fail = |reason: &str| DdlError::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut buf4 = [0u8; 4];
    let io_err = |e| DdlError::io(path.display(), e);
    r.read_exact(&mut buf4).map_err(io_err)?;
    if &buf4 != magic {
        return Err(fail(&format!(
            "bad magic {buf4:?}, expected {:?}",
            std::str::from_utf8(magic).unwrap()
        )));
    }
    r.read_exact(&mut buf4).map_err(io_err)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    r.read_exact(&mut buf4).map_err(io_err)?;
    let count = u32::from_le_bytes(buf4) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf4).map_err(io_err)?;
        let name_len = u32::from_le_bytes(buf4) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| fail("entry name is not valid UTF-8"))?;
        r.read_exact(&mut buf4).map_err(io_err)?;
        let rank = u32::from_le_bytes(buf4) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut buf4).map_err(io_err)?;
            dims.push(u32::from_le_bytes(buf4) as usize);
        }
        let shape = Shape::new(dims);
        let mut values = vec![0f32; shape.numel()];
        for v in values.iter_mut() {
            r.read_exact(&mut buf4).map_err(io_err)?;
            *v = f32::from_le_bytes(buf4);
        }
        entries.push(Entry {
            name,
            shape,
            values,
        });
    }
    Ok(entries)
}

impl<T: Scalar> ParameterStore<T> {
    /// Save parameter values ("DDLP").
    pub fn save_params(&self, path: &Path) -> Result<()> {
        let entries: Vec<Entry> = self
            .iter()
            .map(|(name, p)| Entry {
                name: name.clone(),
                shape: p.shape.clone(),
                values: p.value.iter().map(|v| v.to_f64() as f32).collect(),
            })
            .collect();
        write_file(path, MAGIC_PARAMS, &entries)
    }

    /// Save Adam moments and step counters ("DDLM").
    pub fn save_moments(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len() * 3);
        for (name, p) in self.iter() {
            entries.push(Entry {
                name: format!("{name}#m"),
                shape: p.shape.clone(),
                values: p.m.iter().map(|v| v.to_f64() as f32).collect(),
            });
            entries.push(Entry {
                name: format!("{name}#v"),
                shape: p.shape.clone(),
                values: p.v.iter().map(|v| v.to_f64() as f32).collect(),
            });
            entries.push(Entry {
                name: format!("{name}#t"),
                shape: Shape::new(vec![1]),
                values: vec![p.step as f32],
            });
        }
        write_file(path, MAGIC_MOMENTS, &entries)
    }

    /// Load a "DDLP" file into a fresh store with zeroed optimizer state.
    pub fn load_params(path: &Path) -> Result<Self> {
        let mut store = ParameterStore::new();
        for e in read_file(path, MAGIC_PARAMS)? {
            let values = e.values.iter().map(|&v| T::from_f64(v as f64)).collect();
            store.insert(&e.name, e.shape, values)?;
        }
        Ok(store)
    }

    /// Restore optimizer state from a sibling "DDLM" file.
    pub fn load_moments(&mut self, path: &Path) -> Result<()> {
        let entries = read_file(path, MAGIC_MOMENTS)?;
        let fail = |reason: String| DdlError::Format {
            path: path.display().to_string(),
            reason,
        };
        for e in entries {
            let Some((base, kind)) = e.name.rsplit_once('#') else {
                return Err(fail(format!("moment entry {} lacks a #kind suffix", e.name)));
            };
            let param: &mut Param<T> = self.get_mut(base)?;
            match kind {
                "m" => param.m = e.values.iter().map(|&v| T::from_f64(v as f64)).collect(),
                "v" => param.v = e.values.iter().map(|&v| T::from_f64(v as f64)).collect(),
                "t" => param.step = e.values[0] as u64,
                other => return Err(fail(format!("unknown moment kind #{other}"))),
            }
        }
        Ok(())
    }
}

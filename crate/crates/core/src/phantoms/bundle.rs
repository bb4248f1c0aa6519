//! Case bundles on disk: a directory with `image.vol`,
//! `structures/<name>.vol` (VOLG format), an optional `prediction.vol`, and
//! `meta.json` with the drawn organ parameters.

use super::{Case, CaseMeta, DatasetSplits};
use crate::error::{DdlError, Result};
use crate::volumetric::volg;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub n_cases: usize,
    pub case_ids: Vec<String>,
    pub splits: DatasetSplits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub fn write_case(dir: &Path, case: &Case) -> Result<()> {
    std::fs::create_dir_all(dir.join("structures"))
        .map_err(|e| DdlError::io(dir.display(), e))?;
    volg::write_grid(&dir.join("image.vol"), &case.image)?;
    for (name, mask) in &case.structures {
        volg::write_mask(&dir.join("structures").join(format!("{name}.vol")), mask)?;
    }
    if let Some(pred) = &case.general_prediction {
        volg::write_mask(&dir.join("prediction.vol"), pred)?;
    }
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&case.meta)?;
    std::fs::write(&meta_path, json).map_err(|e| DdlError::io(meta_path.display(), e))?;
    Ok(())
}

pub fn read_case(dir: &Path) -> Result<Case> {
    let meta_path = dir.join("meta.json");
    let meta: CaseMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path).map_err(|e| DdlError::io(meta_path.display(), e))?,
    )?;
    let image = volg::read_grid(&dir.join("image.vol"))?;
    let mut structures = BTreeMap::new();
    let sdir = dir.join("structures");
    let mut names: Vec<String> = std::fs::read_dir(&sdir)
        .map_err(|e| DdlError::io(sdir.display(), e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            let name = path.file_stem()?.to_str()?.to_string();
            (path.extension().and_then(|e| e.to_str()) == Some("vol")).then_some(name)
        })
        .collect();
    names.sort();
    for name in names {
        structures.insert(name.clone(), volg::read_mask(&sdir.join(format!("{name}.vol")))?);
    }
    let pred_path = dir.join("prediction.vol");
    let general_prediction = if pred_path.exists() {
        Some(volg::read_mask(&pred_path)?)
    } else {
        None
    };
    Ok(Case {
        meta,
        image,
        structures,
        general_prediction,
    })
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json).map_err(|e| DdlError::io(path.display(), e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| DdlError::io(path.display(), e))?;
    Ok(serde_json::from_str(&text)?)
}

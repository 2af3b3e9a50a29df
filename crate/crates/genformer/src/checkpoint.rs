//! Checkpoint directories: `manifest.json` plus one little-endian `f64` blob
//! per parameter.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use genformer_core::neural::checkpoint::{export, import};
use genformer_core::neural::{ParamLayout, ParamStore};

use crate::error::{format_err, io_err, Result};
use crate::io::{atomic_write, read_json, write_json};

pub const FORMAT: &str = "genformer-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<M> {
    pub format: String,
    pub meta: M,
    pub params: Vec<BlobEntry>,
}

pub fn save<M: Serialize>(dir: &Path, store: &ParamStore, meta: &M) -> Result<()> {
    let (layout, blobs) = export(store);
    let mut params = Vec::with_capacity(layout.len());
    for (k, (l, b)) in layout.iter().zip(&blobs).enumerate() {
        let file = format!("param_{k:04}.bin");
        atomic_write(&dir.join(&file), b)?;
        params.push(BlobEntry { name: l.name.clone(), rows: l.rows, cols: l.cols, file });
    }
    let manifest = Manifest { format: FORMAT.to_string(), meta, params };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn read_meta<M: DeserializeOwned>(dir: &Path) -> Result<M> {
    let manifest: Manifest<M> = read_json(&dir.join("manifest.json"))?;
    Ok(manifest.meta)
}

/// Loads blobs into `store`, which must already have the saved architecture.
pub fn load(dir: &Path, store: &mut ParamStore) -> Result<()> {
    let path = dir.join("manifest.json");
    let manifest: Manifest<serde_json::Value> = read_json(&path)?;
    if manifest.format != FORMAT {
        return Err(format_err(&path, format!("unknown checkpoint format {}", manifest.format)));
    }
    let layout: Vec<ParamLayout> = manifest
        .params
        .iter()
        .map(|p| ParamLayout { name: p.name.clone(), rows: p.rows, cols: p.cols })
        .collect();
    let blobs = manifest
        .params
        .iter()
        .map(|p| {
            let f = dir.join(&p.file);
            fs::read(&f).map_err(io_err(f))
        })
        .collect::<Result<Vec<_>>>()?;
    import(store, &layout, &blobs)?;
    Ok(())
}

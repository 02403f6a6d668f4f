//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/metadata.json   config echo, variant, seed, training step
//! <dir>/index.json      parameter name -> { shape, offset, buffer }
//! <dir>/params.bin      concatenated little-endian f32 arrays
//! ```
//!
//! Parameters are written in name order, so identical stores produce
//! byte-identical checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::{BackboneVariant, HybridEncoderConfig, VariantFlags};
use crate::error::{Error, Result};

pub const METADATA_FILE: &str = "metadata.json";
pub const INDEX_FILE: &str = "index.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: HybridEncoderConfig,
    pub variant: BackboneVariant,
    pub flags: VariantFlags,
    pub seed: u64,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub shape: Vec<usize>,
    /// Byte offset into `params.bin`.
    pub offset: usize,
    #[serde(default)]
    pub buffer: bool,
}

pub type CheckpointIndex = BTreeMap<String, IndexEntry>;

/// Parses `index.json` and checks it against a parameter blob of `blob_len` bytes.
pub fn parse_index(bytes: &[u8], blob_len: usize) -> Result<CheckpointIndex> {
    let index: CheckpointIndex = serde_json::from_slice(bytes)?;
    let mut spans: Vec<(usize, usize, &str)> = Vec::with_capacity(index.len());
    for (name, e) in &index {
        let n = e
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape {:?} overflows", e.shape)))?;
        let end = e
            .offset
            .checked_add(n)
            .filter(|&end| end <= blob_len)
            .ok_or_else(|| {
                Error::Checkpoint(format!("{name}: extends past end of {PARAMS_FILE}"))
            })?;
        if e.offset % 4 != 0 {
            return Err(Error::Checkpoint(format!(
                "{name}: misaligned offset {}",
                e.offset
            )));
        }
        spans.push((e.offset, end, name));
    }
    spans.sort_unstable();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Checkpoint(format!("{} overlaps {}", w[1].2, w[0].2)));
        }
    }
    Ok(index)
}

/// Decodes every parameter named in `index` from `blob`.
pub fn decode_params(
    index: &CheckpointIndex,
    blob: &[u8],
) -> Result<BTreeMap<String, (Vec<usize>, Vec<f32>)>> {
    let mut out = BTreeMap::new();
    for (name, e) in index {
        let n: usize = e.shape.iter().product();
        let bytes = blob
            .get(e.offset..e.offset + 4 * n)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: truncated data")))?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.insert(name.clone(), (e.shape.clone(), values));
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the store atomically: everything goes to a sibling temp
/// directory which is then renamed over `dir`.
pub fn save_checkpoint(
    store: &ParamStore,
    dir: impl AsRef<Path>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let dir = dir.as_ref();
    let parent = dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("invalid checkpoint path {}", dir.display())))?;
    let tmp: PathBuf = parent.join(format!(".{}.tmp", name.to_string_lossy()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let mut index = CheckpointIndex::new();
    let mut blob = Vec::with_capacity(store.num_elements() * 4);
    for (name, var) in store.iter() {
        let values = var
            .as_tensor()
            .flatten_all()?
            .to_dtype(DType::F32)?
            .to_vec1::<f32>()?;
        index.insert(
            name.to_string(),
            IndexEntry {
                shape: var.dims().to_vec(),
                offset: blob.len(),
                buffer: store.is_buffer(name),
            },
        );
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(&tmp.join(PARAMS_FILE), &blob)?;
    write_file(
        &tmp.join(INDEX_FILE),
        serde_json::to_string_pretty(&index)?.as_bytes(),
    )?;
    write_file(
        &tmp.join(METADATA_FILE),
        serde_json::to_string_pretty(meta)?.as_bytes(),
    )?;

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub fn load_meta(dir: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = dir.as_ref().join(METADATA_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Reads a checkpoint into a fresh store whose seed is the recorded one.
pub fn load_checkpoint(
    dir: impl AsRef<Path>,
    dtype: DType,
) -> Result<(ParamStore, CheckpointMeta)> {
    let dir = dir.as_ref();
    let meta = load_meta(dir)?;
    let blob_path = dir.join(PARAMS_FILE);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let index_path = dir.join(INDEX_FILE);
    let index_bytes = fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index = parse_index(&index_bytes, blob.len())?;
    let params = decode_params(&index, &blob)?;

    let mut store = ParamStore::new(meta.seed, dtype);
    for (name, (shape, values)) in params {
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?;
        store.insert(&name, &t, index[&name].buffer)?;
    }
    Ok((store, meta))
}

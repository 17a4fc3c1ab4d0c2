//! Binary artifact formats and atomic file writes.
//!
//! Relevance matrices (`TBRM`) and PCA models (`TBPC`) share a layout
//! family: 4 magic bytes, a little-endian `u32` format version, `u64` shape
//! fields, then row-major little-endian payload. Relevance matrices store
//! `f32` entries and carry a JSON sidecar binding them to a corpus; PCA
//! models store `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{sidecar_path, SourceCorpus};
use crate::error::{Error, Result};
use crate::reduce::PcaModel;
use crate::tagprop::RelevanceMatrix;

pub const RELEVANCE_MAGIC: &[u8; 4] = b"TBRM";
pub const PCA_MAGIC: &[u8; 4] = b"TBPC";
pub const FORMAT_VERSION: u32 = 1;

/// Write `bytes` to a temporary file next to `path`, then rename it over
/// `path`. Readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct RelevanceSidecar {
    format: String,
    version: u32,
    rows: usize,
    cols: usize,
    vocab_hash: String,
    video_ids: Vec<String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::corrupt(self.path, "truncated file"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::corrupt(self.path, "size overflows usize"))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::corrupt(self.path, "bad magic bytes"));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::corrupt(
                self.path,
                format!("unsupported format version {version}"),
            ));
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::corrupt(self.path, "size overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::corrupt(self.path, "size overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if !self.bytes.is_empty() {
            return Err(Error::corrupt(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

/// Serialize a relevance matrix in the `TBRM` layout.
pub fn encode_relevance(r: &RelevanceMatrix) -> Vec<u8> {
    let (rows, cols) = r.shape();
    let mut out = Vec::with_capacity(24 + rows * cols * 4);
    out.extend_from_slice(RELEVANCE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for &v in r.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_relevance(bytes: &[u8], path: &Path) -> Result<RelevanceMatrix> {
    let mut reader = Reader { bytes, path };
    reader.header(RELEVANCE_MAGIC)?;
    let rows = reader.u64()?;
    let cols = reader.u64()?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::corrupt(path, "size overflow"))?;
    let values = reader.f32s(n)?;
    reader.finish()?;
    RelevanceMatrix::from_vec(rows, cols, values).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Write `r` to `path` with its `<path>.json` sidecar listing the corpus
/// video ids and vocabulary hash.
pub fn save_relevance(r: &RelevanceMatrix, corpus: &SourceCorpus, path: &Path) -> Result<()> {
    let (rows, cols) = r.shape();
    let sidecar = RelevanceSidecar {
        format: "TBRM".into(),
        version: FORMAT_VERSION,
        rows,
        cols,
        vocab_hash: corpus.vocabulary().content_hash(),
        video_ids: corpus.ids().iter().map(|id| id.to_string()).collect(),
    };
    write_atomic(path, &encode_relevance(r))?;
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    write_atomic(&sidecar_path(path), text.as_bytes())
}

/// Read a relevance matrix and check its sidecar against `corpus`.
pub fn load_relevance(path: &Path, corpus: &SourceCorpus) -> Result<RelevanceMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let r = decode_relevance(&bytes, path)?;
    let side_path = sidecar_path(path);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: RelevanceSidecar = serde_json::from_str(&text)?;
    if sidecar.vocab_hash != corpus.vocabulary().content_hash() {
        return Err(Error::corrupt(path, "vocabulary hash does not match corpus"));
    }
    let ids_match = sidecar.video_ids.len() == corpus.len()
        && sidecar.video_ids.iter().zip(corpus.ids()).all(|(a, b)| a == b.as_str());
    if !ids_match || (sidecar.rows, sidecar.cols) != r.shape() {
        return Err(Error::corrupt(path, "sidecar does not match corpus videos"));
    }
    Ok(r)
}

/// Serialize a PCA model in the `TBPC` layout: `m`, `m'`, then the mean
/// (`m`), components (`m' × m`) and explained variances (`m'`) as `f64`.
pub fn encode_pca(model: &PcaModel) -> Vec<u8> {
    let m = model.input_dim();
    let reduced = model.output_dim();
    let mut out = Vec::with_capacity(24 + (m + reduced * m + reduced) * 8);
    out.extend_from_slice(PCA_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(reduced as u64).to_le_bytes());
    for &v in model
        .mean()
        .iter()
        .chain(model.components())
        .chain(model.explained_variance())
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pca(bytes: &[u8], path: &Path) -> Result<PcaModel> {
    let mut reader = Reader { bytes, path };
    reader.header(PCA_MAGIC)?;
    let m = reader.u64()?;
    let reduced = reader.u64()?;
    let mean = reader.f64s(m)?;
    let components = reader.f64s(
        reduced
            .checked_mul(m)
            .ok_or_else(|| Error::corrupt(path, "size overflow"))?,
    )?;
    let variance = reader.f64s(reduced)?;
    reader.finish()?;
    PcaModel::from_parts(mean, components, variance).map_err(|e| Error::corrupt(path, e.to_string()))
}

pub fn save_pca(model: &PcaModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pca(model))
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pca(&bytes, path)
}

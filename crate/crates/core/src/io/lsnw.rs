use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, WeightStore};

pub const LSNW_MAGIC: &[u8; 4] = b"LSNW";
pub const LSNW_VERSION: u32 = 1;
const ALIGN: usize = 16;
const PREAMBLE: usize = 12;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    /// CRC-32 of the blob.
    crc32: u32,
    /// CRC-32 of the compact JSON encoding of `config` with keys sorted.
    config_crc32: u32,
    blob_len: usize,
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

fn header_err(e: serde_json::Error) -> Error {
    Error::Header(e.to_string())
}

fn value_crc(v: &serde_json::Value) -> Result<u32> {
    Ok(crc32fast::hash(&serde_json::to_vec(v).map_err(header_err)?))
}

/// Serializes a model to LSNW bytes. Values are stored as little-endian f32.
pub fn encode_lsnw(model: &Model) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    let mut tensors = Vec::with_capacity(model.weights().len());
    for t in model.weights().tensors() {
        blob.resize(align_up(blob.len()), 0);
        let offset = blob.len();
        for &v in &t.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            length: blob.len() - offset,
        });
    }
    blob.resize(align_up(blob.len()), 0);
    let header = Header {
        config: model.config().clone(),
        tensors,
        crc32: crc32fast::hash(&blob),
        config_crc32: value_crc(&serde_json::to_value(model.config()).map_err(header_err)?)?,
        blob_len: blob.len(),
    };
    let json = serde_json::to_vec(&header).map_err(header_err)?;
    let header_len = u32::try_from(json.len()).map_err(|_| Error::Header("header too large".into()))?;

    let blob_start = align_up(PREAMBLE + json.len());
    let mut out = Vec::with_capacity(blob_start + blob.len());
    out.extend_from_slice(LSNW_MAGIC);
    out.extend_from_slice(&LSNW_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    out.resize(blob_start, 0);
    out.extend_from_slice(&blob);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize) -> Result<&'a [u8]> {
    at.checked_add(len)
        .and_then(|end| bytes.get(at..end))
        .ok_or(Error::UnexpectedEof)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = take(bytes, at, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses LSNW bytes into a model. `source` names the origin in checksum
/// errors.
pub fn decode_lsnw(bytes: &[u8], source: &Path) -> Result<Model> {
    if take(bytes, 0, 4)? != LSNW_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(bytes, 4)?;
    if version != LSNW_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let json = take(bytes, PREAMBLE, header_len)?;
    let raw: serde_json::Value = serde_json::from_slice(json).map_err(header_err)?;
    let raw_config = raw.get("config").cloned().ok_or_else(|| Error::Header("missing config".into()))?;
    let header: Header = serde_json::from_value(raw).map_err(header_err)?;

    let blob_start = align_up(PREAMBLE + header_len);
    if take(bytes, PREAMBLE + header_len, blob_start - PREAMBLE - header_len)?.iter().any(|&b| b != 0) {
        return Err(Error::Header("non-zero padding before blob".into()));
    }
    let blob = take(bytes, blob_start, header.blob_len)?;
    if bytes.len() != blob_start + header.blob_len {
        return Err(Error::Header(format!(
            "{} trailing bytes after blob",
            bytes.len() - blob_start - header.blob_len
        )));
    }
    let computed = crc32fast::hash(blob);
    if computed != header.crc32 {
        return Err(Error::Checksum {
            path: source.to_path_buf(),
            stored: header.crc32,
            computed,
        });
    }

    let computed = value_crc(&raw_config)?;
    if computed != header.config_crc32 {
        return Err(Error::Checksum {
            path: source.to_path_buf(),
            stored: header.config_crc32,
            computed,
        });
    }
    // unknown or defaulted config keys would otherwise be dropped silently
    if serde_json::to_value(&header.config).map_err(header_err)? != raw_config {
        return Err(Error::Header("config holds unrecognized or missing fields".into()));
    }

    let mut ws = WeightStore::new();
    let mut expected_offset = 0;
    for e in &header.tensors {
        let bad = |reason: String| Error::Tensor {
            name: e.name.clone(),
            reason,
        };
        let numel = e
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("shape overflows".into()))?;
        if numel.checked_mul(4) != Some(e.length) {
            return Err(bad(format!("byte length {} does not match shape {:?}", e.length, e.shape)));
        }
        // tensors are packed in table order, each starting on an aligned boundary
        if e.offset != expected_offset {
            return Err(bad(format!("offset {}, expected {expected_offset}", e.offset)));
        }
        expected_offset = align_up(e.offset + e.length);
        let raw = e
            .offset
            .checked_add(e.length)
            .and_then(|end| blob.get(e.offset..end))
            .ok_or_else(|| bad(format!("bytes {}..+{} lie outside the blob", e.offset, e.length)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if ws.id(&e.name).is_some() {
            return Err(bad("duplicate name".into()));
        }
        ws.push(e.name.clone(), e.shape.clone(), data)?;
    }
    if expected_offset != header.blob_len {
        return Err(Error::Header(format!(
            "blob holds {} bytes, tensors cover {expected_offset}",
            header.blob_len
        )));
    }
    Model::from_weights(header.config, ws)
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_lsnw(model)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    decode_lsnw(&fs::read(path)?, path)
}

/// Loads a weight file and rejects it unless its stored configuration
/// equals `expected`.
pub fn load_weights_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Model> {
    let model = load_weights(&path)?;
    if model.config() != expected {
        let p: PathBuf = path.as_ref().to_path_buf();
        return Err(Error::Header(format!(
            "configuration stored in {} differs from the expected one",
            p.display()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_aligned() {
        let m = Model::new(ModelConfig::tiny(), 0).unwrap();
        let bytes = encode_lsnw(&m).unwrap();
        assert_eq!(&bytes[..4], b"LSNW");
        let hl = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(&bytes[12..12 + hl]).unwrap();
        assert_eq!(bytes.len() - align_up(12 + hl), header.blob_len);
        assert!(header.tensors.iter().all(|e| e.offset % 16 == 0));
        assert_eq!(header.blob_len % 16, 0);
    }

    #[test]
    fn empty_input_is_eof() {
        assert!(matches!(decode_lsnw(&[], Path::new("x")), Err(Error::UnexpectedEof)));
        assert!(matches!(decode_lsnw(b"LSNW\x01\x00", Path::new("x")), Err(Error::UnexpectedEof)));
    }
}

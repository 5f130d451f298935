//! Binary model container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QNMT"
//! 4       4     format version, u32 LE (= 1)
//! 8       4     header length N, u32 LE
//! 12      N     header, UTF-8 JSON
//! 12+N    P     payload: f32 LE tensors, row-major, at the header's offsets
//! 12+N+P  8     XXH64 (seed 0) of the payload, u64 LE
//! ```
//!
//! The header carries the dims, the two vocabularies, the initial-state mode, the
//! attention query mode and a directory of `{name, rows, cols, offset}` entries whose
//! offsets are relative to the payload start.

use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use super::{tensor_layout, Dims, ModelParams, Vocab};
use crate::error::{Error, Result};
use crate::layers::{AttentionQuery, InitMode};
use crate::qmath::FloatMatrix;

pub const MAGIC: &[u8; 4] = b"QNMT";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX: usize = 12;

#[derive(Serialize, Deserialize)]
struct Header {
    dims: Dims,
    init_mode: InitMode,
    attention_query: AttentionQuery,
    src_vocab: Vec<String>,
    tgt_vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

fn checksum(payload: &[u8]) -> u64 {
    let mut h = XxHash64::with_seed(0);
    h.write(payload);
    h.finish()
}

/// Serializes `params` into the container format.
pub fn write_model(params: &ModelParams, out: &mut impl Write) -> Result<()> {
    params.validate()?;
    let mut entries = Vec::new();
    let mut payload = Vec::with_capacity(params.parameter_count() * 4);
    for (name, _, t) in params.tensors() {
        entries.push(TensorEntry {
            name,
            rows: t.rows(),
            cols: t.cols(),
            offset: payload.len() as u64,
        });
        for v in t.as_slice() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        dims: params.dims,
        init_mode: params.init_mode,
        attention_query: params.attention_query,
        src_vocab: params.src_vocab.tokens().to_vec(),
        tgt_vocab: params.tgt_vocab.tokens().to_vec(),
        tensors: entries,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let header_len = u32::try_from(header.len()).map_err(|_| Error::Parameter("header exceeds 4 GiB".into()))?;

    let io = |e| Error::io("<model stream>", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&header_len.to_le_bytes()).map_err(io)?;
    out.write_all(&header).map_err(io)?;
    out.write_all(&payload).map_err(io)?;
    out.write_all(&checksum(&payload).to_le_bytes()).map_err(io)?;
    Ok(())
}

pub fn save_model(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(params, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(bytes.len() as u64, "file truncated"))
}

/// Parses a complete container. Nothing is returned unless every check passes.
pub fn read_model(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, not a QNMT model"));
    }
    let version = u32_at(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported format version {version}")));
    }
    let header_len = u32_at(bytes, 8)? as usize;
    let header_end = PREFIX + header_len;
    let header_bytes = bytes
        .get(PREFIX..header_end)
        .ok_or_else(|| Error::format(bytes.len() as u64, format!("header of {header_len} bytes truncated")))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| {
        let offset = if e.line() == 1 { PREFIX + e.column().saturating_sub(1) } else { PREFIX };
        Error::format(offset as u64, format!("malformed header: {e}"))
    })?;

    let dims = header.dims;
    let layout = tensor_layout(&dims);
    let payload_len: usize = layout.iter().map(|(_, _, r, c)| r * c * 4).sum();
    let payload_end = header_end + payload_len;
    if bytes.len() < payload_end + 8 {
        return Err(Error::format(bytes.len() as u64, format!(
            "file truncated: expected {} bytes, found {}",
            payload_end + 8,
            bytes.len()
        )));
    }
    if bytes.len() > payload_end + 8 {
        return Err(Error::format((payload_end + 8) as u64, "trailing bytes after checksum"));
    }
    let payload = &bytes[header_end..payload_end];
    let stored = u64::from_le_bytes(bytes[payload_end..payload_end + 8].try_into().unwrap());
    if stored != checksum(payload) {
        return Err(Error::format(payload_end as u64, "payload checksum mismatch"));
    }

    let mut params = ModelParams::zeros(dims).map_err(|e| Error::Schema(e.to_string()))?;
    params.init_mode = header.init_mode;
    params.attention_query = header.attention_query;
    params.src_vocab = Vocab::new(header.src_vocab)?;
    params.tgt_vocab = Vocab::new(header.tgt_vocab)?;
    if header.tensors.len() != layout.len() {
        return Err(Error::Schema(format!(
            "directory lists {} tensors, expected {}",
            header.tensors.len(),
            layout.len()
        )));
    }
    for (name, _, slot) in params.tensors_mut() {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("tensor {name} missing from directory")))?;
        if (entry.rows, entry.cols) != slot.shape() {
            return Err(Error::Schema(format!(
                "tensor {name} is {}x{}, dims require {}x{}",
                entry.rows,
                entry.cols,
                slot.rows(),
                slot.cols()
            )));
        }
        let start = entry.offset as usize;
        let len = entry.rows * entry.cols * 4;
        let raw = payload.get(start..start + len).ok_or_else(|| {
            Error::format((header_end + start) as u64, format!("tensor {name} lies outside the payload"))
        })?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format((header_end + start + 4 * i) as u64, format!("non-finite value in {name}")));
        }
        *slot = FloatMatrix::from_vec(entry.rows, entry.cols, values);
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_model;

    fn bytes_of(p: &ModelParams) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(p, &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip_is_exact() {
        let mut p = generate_model(9, 11, 5, 4, 3).unwrap();
        p.init_mode = InitMode::Zero;
        p.attention_query = AttentionQuery::Previous;
        let bytes = bytes_of(&p);
        assert_eq!(&bytes[..4], b"QNMT");
        let q = read_model(&bytes).unwrap();
        assert_eq!(q, p);
        assert_eq!(bytes_of(&q), bytes);
    }

    #[test]
    fn truncation_and_corruption_are_reported() {
        let bytes = bytes_of(&generate_model(9, 11, 5, 4, 3).unwrap());
        for cut in [0, 3, 10, 40, bytes.len() - 9, bytes.len() - 1] {
            assert!(matches!(read_model(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(read_model(&bad), Err(Error::Format { offset: 4, .. })));
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 20] ^= 0x55;
        let payload_end = n - 8;
        match read_model(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, payload_end),
            other => panic!("expected checksum error, got {other:?}"),
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_model(&extra), Err(Error::Format { .. })));
    }

    #[test]
    fn dims_disagreeing_with_directory_is_schema_error() {
        let p = generate_model(9, 11, 5, 4, 3).unwrap();
        let bytes = bytes_of(&p);
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + header_len]).unwrap();
        header["tensors"][0]["rows"] = 8.into();
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut rebuilt = bytes[..8].to_vec();
        rebuilt.extend((new_header.len() as u32).to_le_bytes());
        rebuilt.extend(new_header);
        rebuilt.extend(&bytes[12 + header_len..]);
        assert!(matches!(read_model(&rebuilt), Err(Error::Schema(_))));
    }
}

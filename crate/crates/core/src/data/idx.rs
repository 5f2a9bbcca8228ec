//! IDX container format: big-endian magic, one u32 per dimension, raw bytes.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<usize>,
}

impl IdxHeader {
    pub fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().product()
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Reads a whole file, inflating it first if it starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(offset, "file ends inside the header"))
}

/// Parses and validates an unsigned-byte IDX buffer with the expected magic.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<(IdxHeader, &[u8])> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(format_err(
            0,
            format!("magic {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|k| read_u32(bytes, 4 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = IdxHeader { magic, dims };
    let start = header.byte_len();
    let want = header.payload_len();
    let have = bytes.len() - start;
    if have < want {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {have} of {want} bytes"),
        ));
    }
    if have > want {
        return Err(format_err(
            start + want,
            format!("{} trailing bytes after payload", have - want),
        ));
    }
    Ok((header, &bytes[start..]))
}

pub fn encode_idx(magic: u32, dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

pub fn write_idx(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    std::fs::write(path, encode_idx(magic, dims, payload))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip() {
        let bytes = encode_idx(IMAGES_MAGIC, &[2, 2, 3], &[7; 12]);
        let (h, payload) = parse_idx(&bytes, IMAGES_MAGIC).unwrap();
        assert_eq!(h.dims, vec![2, 2, 3]);
        assert_eq!(payload, &[7; 12]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let bytes = encode_idx(IMAGES_MAGIC, &[1, 1, 1], &[0]);
        let err = parse_idx(&bytes, LABELS_MAGIC).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_header_and_payload() {
        let bytes = encode_idx(LABELS_MAGIC, &[5], &[1, 2, 3]);
        let err = parse_idx(&bytes, LABELS_MAGIC).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 11, .. }), "{err}");
        let err = parse_idx(&bytes[..6], LABELS_MAGIC).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let bytes = encode_idx(LABELS_MAGIC, &[1], &[1, 2]);
        assert!(matches!(
            parse_idx(&bytes, LABELS_MAGIC),
            Err(Error::Format { offset: 9, .. })
        ));
    }
}

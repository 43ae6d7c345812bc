use std::io::{Read, Write};

use super::binary::read_fully;
use super::{FeatureSet, FORMAT_VERSION};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"CHFV";
const HEADER_LEN: usize = 17;
const READ_CHUNK: usize = 1 << 20;

pub fn write_features<W: Write>(features: &FeatureSet, mut sink: W) -> Result<u64> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * features.flat().len());
    buf.extend_from_slice(&FEATURE_MAGIC);
    buf.push(FORMAT_VERSION);
    buf.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(features.len() as u64).to_le_bytes());
    for v in features.flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len() as u64)
}

/// Reads a `CHFV` feature file. Non-finite values are rejected.
pub fn read_features<R: Read>(mut source: R) -> Result<FeatureSet> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_fully(&mut source, &mut header)?;
    if got < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic { expected: FEATURE_MAGIC, found: magic });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    if header[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let dim = u32::from_le_bytes(header[5..9].try_into().unwrap());
    let count = u64::from_le_bytes(header[9..17].try_into().unwrap());
    if dim == 0 {
        return Err(Error::InvalidHeader("feature dimension is zero".into()));
    }
    let payload = count
        .checked_mul(dim as u64)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::InvalidHeader(format!("payload size overflows for count {count}")))?;

    let mut values: Vec<f64> = Vec::new();
    let mut remaining = payload;
    let mut buf = vec![0u8; READ_CHUNK.min(payload as usize)];
    while remaining > 0 {
        let want = (remaining as usize).min(buf.len());
        let got = read_fully(&mut source, &mut buf[..want])?;
        for b in buf[..got - got % 8].chunks_exact(8) {
            let v = f64::from_le_bytes(b.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite(values.len()));
            }
            values.push(v);
        }
        if got < want {
            let read = payload - remaining + got as u64;
            return Err(Error::Truncated { expected: HEADER_LEN as u64 + payload, got: HEADER_LEN as u64 + read });
        }
        remaining -= got as u64;
    }
    let mut extra = [0u8; 1];
    if read_fully(&mut source, &mut extra)? != 0 {
        return Err(Error::InvalidHeader("trailing bytes after payload".into()));
    }
    FeatureSet::from_rows(dim as usize, values.chunks_exact(dim as usize))
}

//! Regressor checkpoint format.
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `CHMM` |
//! | 4 | 1 | version `0x01` |
//! | 5 | 24 | `embed_dim`, `num_layers`, `num_heads`, `mlp_hidden`, `seq_len`, `codebook` as u32 LE |
//! | 29 | 8 | init seed, u64 LE |
//! | 37 | 8 | parameter count, u64 LE |
//! | 45 | 8 x count | parameters as f64 LE, in the flat buffer order |

use std::io::{Read, Write};

use super::model::{RegressorConfig, RegressorParams};
use crate::error::{Error, Result};
use crate::token_io::read_fully;
use crate::token_io::{Codebook, FORMAT_VERSION};

pub const MODEL_MAGIC: [u8; 4] = *b"CHMM";
const HEADER_LEN: usize = 45;
const READ_CHUNK: usize = 1 << 20;

pub fn write_checkpoint<W: Write>(params: &RegressorParams, mut sink: W) -> Result<u64> {
    let c = params.config();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&MODEL_MAGIC);
    header.push(FORMAT_VERSION);
    for v in [c.embed_dim, c.num_layers, c.num_heads, c.mlp_hidden, c.seq_len] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("dimension {v} exceeds u32")))?;
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&c.codebook.size().to_le_bytes());
    header.extend_from_slice(&c.seed.to_le_bytes());
    header.extend_from_slice(&(params.len() as u64).to_le_bytes());
    sink.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * params.len());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok((header.len() + buf.len()) as u64)
}

pub fn read_checkpoint<R: Read>(mut source: R) -> Result<RegressorParams> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_fully(&mut source, &mut header)?;
    if got < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic { expected: MODEL_MAGIC, found: magic });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    if header[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let u32_at = |i: usize| u32::from_le_bytes(header[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let codebook = Codebook::new(u32_at(5)).map_err(|e| Error::InvalidHeader(e.to_string()))?;
    let config = RegressorConfig {
        embed_dim: u32_at(0) as usize,
        num_layers: u32_at(1) as usize,
        num_heads: u32_at(2) as usize,
        mlp_hidden: u32_at(3) as usize,
        seq_len: u32_at(4) as usize,
        codebook,
        seed: u64_at(29),
    };
    config.validate().map_err(|e| Error::InvalidHeader(e.to_string()))?;
    let count = u64_at(37);
    if config.param_count().map(|c| c as u64) != Some(count) {
        return Err(Error::InvalidHeader(format!("parameter count {count} does not match the config")));
    }

    let payload = count * 8;
    let mut values = Vec::new();
    let mut buf = vec![0u8; READ_CHUNK.min(payload as usize)];
    let mut read = 0u64;
    while read < payload {
        let want = ((payload - read) as usize).min(buf.len());
        let got = read_fully(&mut source, &mut buf[..want])?;
        values.extend(buf[..got - got % 8].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())));
        read += got as u64;
        if got < want {
            return Err(Error::Truncated { expected: payload, got: read });
        }
    }
    let mut extra = [0u8; 1];
    if read_fully(&mut source, &mut extra)? != 0 {
        return Err(Error::InvalidHeader("trailing bytes after payload".into()));
    }
    RegressorParams::from_values(config, values)
}

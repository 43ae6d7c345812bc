use std::io::{Read, Write};

use super::{Codebook, GridLayout, TokenDataset, FORMAT_VERSION};
use crate::error::{Error, Result};

pub const TOKEN_MAGIC: [u8; 4] = *b"CHTK";
const HEADER_LEN: usize = 29;
const READ_CHUNK: usize = 1 << 20;

/// Writes `dataset` in the `CHTK` binary format, returning the bytes written.
pub fn write_tokens<W: Write>(dataset: &TokenDataset, mut sink: W) -> Result<u64> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&TOKEN_MAGIC);
    header.push(FORMAT_VERSION);
    header.extend_from_slice(&dataset.codebook().size().to_le_bytes());
    header.extend_from_slice(&(dataset.seq_len() as u32).to_le_bytes());
    let (rows, cols) = dataset.layout().map_or((0, 0), |l| (l.rows, l.cols));
    header.extend_from_slice(&rows.to_le_bytes());
    header.extend_from_slice(&cols.to_le_bytes());
    header.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    sink.write_all(&header)?;

    let mut buf = Vec::with_capacity(READ_CHUNK.min(dataset.flat_ids().len() * 4));
    for chunk in dataset.flat_ids().chunks(READ_CHUNK / 4) {
        buf.clear();
        for id in chunk {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(HEADER_LEN as u64 + 4 * dataset.flat_ids().len() as u64)
}

/// Reads a `CHTK` binary token file, validating the header and every id.
pub fn read_tokens<R: Read>(mut source: R) -> Result<TokenDataset> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_fully(&mut source, &mut header)?;
    if got < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != TOKEN_MAGIC {
        return Err(Error::BadMagic { expected: TOKEN_MAGIC, found: magic });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, got: got as u64 });
    }
    if header[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let k = u32_at(5);
    let n = u32_at(9);
    let rows = u32_at(13);
    let cols = u32_at(17);
    let count = u64::from_le_bytes(header[21..29].try_into().unwrap());

    let codebook = Codebook::new(k).map_err(|e| Error::InvalidHeader(e.to_string()))?;
    if n == 0 {
        return Err(Error::InvalidHeader("sequence length is zero".into()));
    }
    let layout = match (rows, cols) {
        (0, 0) => None,
        (0, _) | (_, 0) => {
            return Err(Error::InvalidHeader(format!("grid {rows}x{cols} has a zero side")))
        }
        (r, c) => Some(GridLayout { rows: r, cols: c }),
    };
    if let Some(l) = layout {
        if l.cells() != n as u64 {
            return Err(Error::InvalidHeader(format!("grid {l} does not match sequence length {n}")));
        }
    }
    let payload = count
        .checked_mul(n as u64)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::InvalidHeader(format!("payload size overflows for count {count}")))?;

    // Grow the buffer as data actually arrives so a lying header cannot force
    // a huge allocation.
    let mut ids: Vec<u32> = Vec::new();
    let mut remaining = payload;
    let mut buf = vec![0u8; READ_CHUNK.min(payload as usize)];
    while remaining > 0 {
        let want = (remaining as usize).min(buf.len());
        let got = read_fully(&mut source, &mut buf[..want])?;
        for b in buf[..got - got % 4].chunks_exact(4) {
            let id = u32::from_le_bytes(b.try_into().unwrap());
            if id >= k {
                return Err(Error::TokenOutOfRange { id, codebook: k });
            }
            ids.push(id);
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
    TokenDataset::from_flat(codebook, n as usize, layout, ids)
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
pub(crate) fn read_fully<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

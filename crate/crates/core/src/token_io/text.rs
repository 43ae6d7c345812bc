use std::io::{BufRead, BufReader, Read, Write};

use super::{Codebook, GridLayout, TokenDataset};
use crate::error::{Error, Result};

/// Writes the `#chtk` text format.
pub fn write_tokens_text<W: Write>(dataset: &TokenDataset, mut sink: W) -> Result<()> {
    let (rows, cols) = dataset.layout().map_or((0, 0), |l| (l.rows, l.cols));
    writeln!(
        sink,
        "#chtk codebook={} seqlen={} grid={rows}x{cols}",
        dataset.codebook().size(),
        dataset.seq_len()
    )?;
    let mut line = String::new();
    for seq in dataset.sequences() {
        line.clear();
        for (i, id) in seq.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&id.to_string());
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads the `#chtk` text format. Blank lines are ignored.
pub fn read_tokens_text<R: Read>(source: R) -> Result<TokenDataset> {
    let mut lines = BufReader::new(source).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::InvalidHeader("empty input".into()))?;
    let (codebook, seq_len, layout) = parse_header(&header)?;
    let mut ds = TokenDataset::new(codebook, seq_len, layout)
        .map_err(|e| Error::InvalidHeader(e.to_string()))?;
    let mut seq = Vec::with_capacity(seq_len);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        seq.clear();
        for tok in line.split_whitespace() {
            let id: u32 = tok
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("'{tok}' is not a token id") })?;
            seq.push(id);
        }
        if seq.len() != seq_len {
            return Err(Error::WrongLength { line: lineno, expected: seq_len, found: seq.len() });
        }
        ds.push(&seq)?;
    }
    Ok(ds)
}

fn parse_header(line: &str) -> Result<(Codebook, usize, Option<GridLayout>)> {
    let bad = |msg: &str| Error::InvalidHeader(format!("{msg}: '{line}'"));
    let mut parts = line.split_whitespace();
    if parts.next() != Some("#chtk") {
        return Err(bad("missing #chtk marker"));
    }
    let (mut k, mut n, mut grid) = (None, None, None);
    for p in parts {
        let (key, value) = p.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        match key {
            "codebook" => k = Some(value.parse::<u32>().map_err(|_| bad("bad codebook"))?),
            "seqlen" => n = Some(value.parse::<usize>().map_err(|_| bad("bad seqlen"))?),
            "grid" => {
                let (r, c) = value.split_once('x').ok_or_else(|| bad("bad grid"))?;
                let r: u32 = r.parse().map_err(|_| bad("bad grid rows"))?;
                let c: u32 = c.parse().map_err(|_| bad("bad grid cols"))?;
                grid = Some((r, c));
            }
            _ => return Err(bad("unknown header key")),
        }
    }
    let k = k.ok_or_else(|| bad("missing codebook"))?;
    let n = n.ok_or_else(|| bad("missing seqlen"))?;
    let codebook = Codebook::new(k).map_err(|e| Error::InvalidHeader(e.to_string()))?;
    let layout = match grid.unwrap_or((0, 0)) {
        (0, 0) => None,
        (r, c) => Some(GridLayout::new(r, c).map_err(|e| Error::InvalidHeader(e.to_string()))?),
    };
    Ok((codebook, n, layout))
}

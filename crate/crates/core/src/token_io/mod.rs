//! Token datasets, feature sets, and their on-disk formats.
//!
//! Binary token files (`CHTK`):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `CHTK`                            |
//! | 4      | 1    | version `0x01`                          |
//! | 5      | 4    | codebook size K (u32 LE)                |
//! | 9      | 4    | sequence length N (u32 LE)              |
//! | 13     | 4    | grid rows (u32 LE, 0 if no layout)      |
//! | 17     | 4    | grid cols (u32 LE, 0 if no layout)      |
//! | 21     | 8    | sequence count (u64 LE)                 |
//! | 29     | 4·N·count | token ids, u32 LE, sequence-major  |
//!
//! Feature files (`CHFV`): magic, version `0x01`, dim (u32 LE), count
//! (u64 LE), then f64 LE values row-major.
//!
//! The text token format has a `#chtk codebook=K seqlen=N grid=RxC` header
//! followed by one space-separated sequence per line.

mod binary;
mod features;
mod text;

pub use binary::{read_tokens, write_tokens, TOKEN_MAGIC};
pub use features::{read_features, write_features, FEATURE_MAGIC};
pub use text::{read_tokens_text, write_tokens_text};
pub(crate) use binary::read_fully;

use crate::error::{invalid, Error, Result};

pub const FORMAT_VERSION: u8 = 0x01;

/// Number of entries in a codebook; always at least 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Codebook(u32);

impl Codebook {
    pub fn new(size: u32) -> Result<Self> {
        if size < 2 {
            return Err(invalid(format!("codebook size must be >= 2, got {size}")));
        }
        Ok(Codebook(size))
    }

    pub fn size(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0 as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

/// Row-major token grid shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridLayout {
    pub rows: u32,
    pub cols: u32,
}

impl GridLayout {
    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("grid {rows}x{cols} has a zero side")));
        }
        Ok(GridLayout { rows, cols })
    }

    pub fn cells(self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

impl std::fmt::Display for GridLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for GridLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| invalid(format!("grid '{s}' is not of the form RxC")))?;
        let rows = r.trim().parse().map_err(|_| invalid(format!("bad grid rows '{r}'")))?;
        let cols = c.trim().parse().map_err(|_| invalid(format!("bad grid cols '{c}'")))?;
        GridLayout::new(rows, cols)
    }
}

/// One image's token ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(v: Vec<u32>) -> Self {
        TokenSequence(v)
    }
}

/// A set of equal-length token sequences over one codebook.
///
/// Ids are stored flat, sequence-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenDataset {
    codebook: Codebook,
    seq_len: usize,
    layout: Option<GridLayout>,
    ids: Vec<u32>,
}

impl TokenDataset {
    /// Creates an empty dataset, validating the shape.
    pub fn new(codebook: Codebook, seq_len: usize, layout: Option<GridLayout>) -> Result<Self> {
        if seq_len == 0 {
            return Err(invalid("sequence length must be positive"));
        }
        if let Some(l) = layout {
            if l.cells() != seq_len as u64 {
                return Err(invalid(format!(
                    "grid {l} has {} cells but sequence length is {seq_len}",
                    l.cells()
                )));
            }
        }
        Ok(TokenDataset { codebook, seq_len, layout, ids: Vec::new() })
    }

    /// Builds a dataset from flat ids, validating every id.
    pub fn from_flat(
        codebook: Codebook,
        seq_len: usize,
        layout: Option<GridLayout>,
        ids: Vec<u32>,
    ) -> Result<Self> {
        let mut ds = TokenDataset::new(codebook, seq_len, layout)?;
        if !ids.len().is_multiple_of(seq_len) {
            return Err(invalid(format!(
                "{} ids do not split into sequences of length {seq_len}",
                ids.len()
            )));
        }
        check_ids(&ids, codebook)?;
        ds.ids = ids;
        Ok(ds)
    }

    pub fn from_sequences<I, S>(
        codebook: Codebook,
        seq_len: usize,
        layout: Option<GridLayout>,
        sequences: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u32]>,
    {
        let mut ds = TokenDataset::new(codebook, seq_len, layout)?;
        for s in sequences {
            ds.push(s.as_ref())?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, seq: &[u32]) -> Result<()> {
        if seq.len() != self.seq_len {
            return Err(invalid(format!(
                "sequence has length {}, dataset expects {}",
                seq.len(),
                self.seq_len
            )));
        }
        check_ids(seq, self.codebook)?;
        self.ids.extend_from_slice(seq);
        Ok(())
    }

    pub fn codebook(&self) -> Codebook {
        self.codebook
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn layout(&self) -> Option<GridLayout> {
        self.layout
    }

    /// Returns the layout or [`Error::MissingLayout`].
    pub fn require_layout(&self) -> Result<GridLayout> {
        self.layout.ok_or(Error::MissingLayout)
    }

    pub fn len(&self) -> usize {
        self.ids.len() / self.seq_len
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn flat_ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }

    pub fn sequences(&self) -> std::slice::ChunksExact<'_, u32> {
        self.ids.chunks_exact(self.seq_len)
    }

    /// Same shape, sequences picked by index (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> TokenDataset {
        let mut ids = Vec::with_capacity(indices.len() * self.seq_len);
        for &i in indices {
            ids.extend_from_slice(self.sequence(i));
        }
        TokenDataset { ids, ..self.empty_like() }
    }

    /// Sequences `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TokenDataset {
        let ids = self.ids[range.start * self.seq_len..range.end * self.seq_len].to_vec();
        TokenDataset { ids, ..self.empty_like() }
    }

    pub fn empty_like(&self) -> TokenDataset {
        TokenDataset {
            codebook: self.codebook,
            seq_len: self.seq_len,
            layout: self.layout,
            ids: Vec::new(),
        }
    }

    /// Checks that `other` has the same codebook, sequence length, and layout.
    pub fn check_compatible(&self, other: &TokenDataset) -> Result<()> {
        if self.codebook != other.codebook {
            return Err(Error::Incompatible(format!(
                "codebook sizes differ: {} vs {}",
                self.codebook.size(),
                other.codebook.size()
            )));
        }
        if self.seq_len != other.seq_len {
            return Err(Error::Incompatible(format!(
                "sequence lengths differ: {} vs {}",
                self.seq_len, other.seq_len
            )));
        }
        if self.layout != other.layout {
            return Err(Error::Incompatible(format!(
                "grid layouts differ: {:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }
}

fn check_ids(ids: &[u32], codebook: Codebook) -> Result<()> {
    match ids.iter().find(|&&id| id >= codebook.size()) {
        Some(&id) => Err(Error::TokenOutOfRange { id, codebook: codebook.size() }),
        None => Ok(()),
    }
}

/// Real-valued feature vectors of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    values: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        Ok(FeatureSet { dim, values: Vec::new() })
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut fs = FeatureSet::new(dim)?;
        for r in rows {
            fs.push(r.as_ref())?;
        }
        Ok(fs)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(invalid(format!(
                "feature vector has length {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.values.len() + i));
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_bad_shapes() {
        let k = Codebook::new(4).unwrap();
        assert!(Codebook::new(1).is_err());
        assert!(TokenDataset::new(k, 0, None).is_err());
        assert!(TokenDataset::new(k, 6, Some(GridLayout::new(2, 2).unwrap())).is_err());
        let mut ds = TokenDataset::new(k, 2, None).unwrap();
        assert!(matches!(ds.push(&[0, 4]), Err(Error::TokenOutOfRange { id: 4, codebook: 4 })));
        assert!(ds.push(&[0, 1, 2]).is_err());
        ds.push(&[0, 3]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.sequence(0), &[0, 3]);
    }

    #[test]
    fn grid_parses() {
        let g: GridLayout = "8x16".parse().unwrap();
        assert_eq!((g.rows, g.cols), (8, 16));
        assert!("8-16".parse::<GridLayout>().is_err());
        assert!("0x16".parse::<GridLayout>().is_err());
    }

    #[test]
    fn features_reject_non_finite() {
        let mut fs = FeatureSet::new(2).unwrap();
        assert!(fs.push(&[1.0, f64::NAN]).is_err());
        assert!(fs.push(&[1.0]).is_err());
        fs.push(&[1.0, 2.0]).unwrap();
        assert_eq!(fs.len(), 1);
    }
}

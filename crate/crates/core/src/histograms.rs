//! Unigram and symmetric co-occurrence statistics over token datasets.
//!
//! Both statistics keep integer counts and normalize on demand, so merging
//! shards is exact and the result is independent of how the dataset was split.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, shards, Execution};
use crate::token_io::{Codebook, TokenDataset};

const SHARD_SEQUENCES: usize = 256;

/// Token frequencies over a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnigramHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl UnigramHistogram {
    /// The zero-count histogram, identity element of [`merge_unigram`].
    pub fn empty(codebook: Codebook) -> Self {
        UnigramHistogram { counts: vec![0; codebook.len()], total: 0 }
    }

    pub fn codebook_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of tokens counted, i.e. sequences times sequence length.
    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn prob(&self, token: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[token] as f64 / self.total as f64
    }

    /// Dense probability vector of length K (all zeros when empty).
    pub fn probs(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|v| self.prob(v)).collect()
    }

    /// Writes `token prob` lines for observed tokens.
    pub fn write_text<W: Write>(&self, mut sink: W) -> Result<()> {
        for (v, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                writeln!(sink, "{v} {}", self.prob(v))?;
            }
        }
        Ok(())
    }
}

pub fn unigram(dataset: &TokenDataset) -> Result<UnigramHistogram> {
    unigram_with(dataset, Execution::default())
}

pub fn unigram_with(dataset: &TokenDataset, exec: Execution) -> Result<UnigramHistogram> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let parts = shards(dataset.len(), SHARD_SEQUENCES);
    let partial = map_range(exec, parts.len(), |i| {
        let mut h = UnigramHistogram::empty(dataset.codebook());
        let r = &parts[i];
        for &id in &dataset.flat_ids()[r.start * dataset.seq_len()..r.end * dataset.seq_len()] {
            h.counts[id as usize] += 1;
        }
        h.total = (r.len() * dataset.seq_len()) as u64;
        h
    });
    partial.into_iter().try_fold(UnigramHistogram::empty(dataset.codebook()), |a, b| merge_unigram(&a, &b))
}

/// Histogram of the concatenation of the two underlying datasets.
pub fn merge_unigram(a: &UnigramHistogram, b: &UnigramHistogram) -> Result<UnigramHistogram> {
    if a.counts.len() != b.counts.len() {
        return Err(Error::Incompatible(format!(
            "codebook sizes differ: {} vs {}",
            a.counts.len(),
            b.counts.len()
        )));
    }
    Ok(UnigramHistogram {
        counts: a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect(),
        total: a.total + b.total,
    })
}

/// Grid offsets `(dx, dy)` along which token pairs are counted.
///
/// `dx` moves along columns, `dy` along rows. Never contains both a
/// displacement and its negation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DisplacementSet(Vec<(i32, i32)>);

impl DisplacementSet {
    pub fn new(displacements: Vec<(i32, i32)>) -> Result<Self> {
        if displacements.is_empty() {
            return Err(invalid("displacement set is empty"));
        }
        for (i, &(dx, dy)) in displacements.iter().enumerate() {
            if (dx, dy) == (0, 0) {
                return Err(invalid("zero displacement"));
            }
            for &other in &displacements[..i] {
                if other == (dx, dy) || other == (-dx, -dy) {
                    return Err(invalid(format!("displacement ({dx},{dy}) is repeated or mirrored")));
                }
            }
        }
        Ok(DisplacementSet(displacements))
    }

    /// Rightward and downward neighbors.
    pub fn right_down() -> Self {
        DisplacementSet(vec![(1, 0), (0, 1)])
    }

    /// Rightward neighbor only; on a `1 x N` layout this is sequence adjacency.
    pub fn right_only() -> Self {
        DisplacementSet(vec![(1, 0)])
    }

    pub fn as_slice(&self) -> &[(i32, i32)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for DisplacementSet {
    fn default() -> Self {
        DisplacementSet::right_down()
    }
}

impl std::str::FromStr for DisplacementSet {
    type Err = Error;

    /// Comma-separated names (`right`, `down`, `downright`, `downleft`) or
    /// `dx:dy` pairs.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<(i32, i32)> {
            Ok(match t.trim() {
                "right" => (1, 0),
                "down" => (0, 1),
                "downright" => (1, 1),
                "downleft" => (-1, 1),
                other => {
                    let (x, y) = other
                        .split_once(':')
                        .ok_or_else(|| invalid(format!("bad displacement '{other}'")))?;
                    let x = x.parse().map_err(|_| invalid(format!("bad displacement '{other}'")))?;
                    let y = y.parse().map_err(|_| invalid(format!("bad displacement '{other}'")))?;
                    (x, y)
                }
            })
        };
        DisplacementSet::new(s.split(',').map(parse).collect::<Result<_>>()?)
    }
}

fn pair_key(u: u32, v: u32) -> u64 {
    let (a, b) = if u <= v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

fn unpack(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

/// Orientation-robust co-occurrence distribution over unordered token pairs.
///
/// For each displacement the counts of unordered pairs are stored together
/// with the number of valid positions `Z`. The probability of `{u, v}` is the
/// displacement-average of `count / Z`, which equals the symmetrized directed
/// distribution summed over both orders of the pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseCooccurrence {
    displacements: DisplacementSet,
    /// Per displacement: sorted `(pair key, count)`.
    counts: Vec<Vec<(u64, u64)>>,
    pair_totals: Vec<u64>,
}

impl SparseCooccurrence {
    pub fn empty(displacements: DisplacementSet) -> Self {
        let n = displacements.len();
        SparseCooccurrence { displacements, counts: vec![Vec::new(); n], pair_totals: vec![0; n] }
    }

    pub fn displacements(&self) -> &DisplacementSet {
        &self.displacements
    }

    /// Valid adjacent pairs per displacement.
    pub fn pair_totals(&self) -> &[u64] {
        &self.pair_totals
    }

    /// Total number of counted pairs across displacements.
    pub fn pair_total(&self) -> u64 {
        self.pair_totals.iter().sum()
    }

    /// Observed unordered pairs `(min, max)` with their probabilities, sorted.
    pub fn entries(&self) -> Vec<((u32, u32), f64)> {
        let scale = 1.0 / self.displacements.len() as f64;
        let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
        for (list, &z) in self.counts.iter().zip(&self.pair_totals) {
            if z == 0 {
                continue;
            }
            for &(key, c) in list {
                *acc.entry(key).or_insert(0.0) += c as f64 / z as f64;
            }
        }
        acc.into_iter().map(|(k, p)| (unpack(k), p * scale)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_totals.iter().all(|&z| z == 0)
    }

    /// Writes `u v prob` lines.
    pub fn write_text<W: Write>(&self, mut sink: W) -> Result<()> {
        for ((u, v), p) in self.entries() {
            writeln!(sink, "{u} {v} {p}")?;
        }
        Ok(())
    }
}

pub fn cooccurrence(dataset: &TokenDataset, disp: &DisplacementSet) -> Result<SparseCooccurrence> {
    cooccurrence_with(dataset, disp, Execution::default())
}

pub fn cooccurrence_with(
    dataset: &TokenDataset,
    disp: &DisplacementSet,
    exec: Execution,
) -> Result<SparseCooccurrence> {
    let layout = dataset.require_layout()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (rows, cols) = (layout.rows as i64, layout.cols as i64);
    for &(dx, dy) in disp.as_slice() {
        if (dx as i64).abs() >= cols || (dy as i64).abs() >= rows {
            return Err(invalid(format!(
                "displacement ({dx},{dy}) leaves no valid pairs on a {layout} grid"
            )));
        }
    }
    let parts = shards(dataset.len(), SHARD_SEQUENCES);
    let partial = map_range(exec, parts.len(), |i| {
        let mut out = SparseCooccurrence::empty(disp.clone());
        for (d, &(dx, dy)) in disp.as_slice().iter().enumerate() {
            let mut map: HashMap<u64, u64> = HashMap::new();
            let (dx, dy) = (dx as i64, dy as i64);
            let (x0, x1) = (0.max(-dx), cols.min(cols - dx));
            let (y0, y1) = (0.max(-dy), rows.min(rows - dy));
            let per_seq = ((x1 - x0) * (y1 - y0)) as u64;
            for s in parts[i].clone() {
                let seq = dataset.sequence(s);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let u = seq[(y * cols + x) as usize];
                        let v = seq[((y + dy) * cols + x + dx) as usize];
                        *map.entry(pair_key(u, v)).or_insert(0) += 1;
                    }
                }
            }
            let mut list: Vec<(u64, u64)> = map.into_iter().collect();
            list.sort_unstable();
            out.counts[d] = list;
            out.pair_totals[d] = per_seq * parts[i].len() as u64;
        }
        out
    });
    partial.into_iter().try_fold(SparseCooccurrence::empty(disp.clone()), |a, b| merge_cooc(&a, &b))
}

/// Co-occurrence of the concatenation of the two underlying datasets.
pub fn merge_cooc(a: &SparseCooccurrence, b: &SparseCooccurrence) -> Result<SparseCooccurrence> {
    if a.displacements != b.displacements {
        return Err(Error::Incompatible("displacement sets differ".into()));
    }
    let counts = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(x, y)| merge_sorted(x, y))
        .collect();
    let pair_totals = a.pair_totals.iter().zip(&b.pair_totals).map(|(x, y)| x + y).collect();
    Ok(SparseCooccurrence { displacements: a.displacements.clone(), counts, pair_totals })
}

fn merge_sorted(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

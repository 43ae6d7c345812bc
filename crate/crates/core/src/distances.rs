//! Distances between token statistics and the composite histogram distance.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::histograms::{
    cooccurrence_with, unigram_with, DisplacementSet, SparseCooccurrence, UnigramHistogram,
};
use crate::token_io::TokenDataset;

/// Hellinger distance between two probability vectors of equal length.
pub fn hellinger_dense(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Incompatible(format!("lengths differ: {} vs {}", p.len(), q.len())));
    }
    let ss: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((ss / 2.0).sqrt().min(1.0))
}

pub fn hellinger(p: &UnigramHistogram, q: &UnigramHistogram) -> Result<f64> {
    if p.codebook_size() != q.codebook_size() {
        return Err(Error::Incompatible(format!(
            "codebook sizes differ: {} vs {}",
            p.codebook_size(),
            q.codebook_size()
        )));
    }
    hellinger_dense(&p.probs(), &q.probs())
}

/// Hellinger distance over the union of observed pairs; absent pairs count as 0.
pub fn hellinger_sparse(p: &SparseCooccurrence, q: &SparseCooccurrence) -> Result<f64> {
    let (a, b) = aligned(p, q)?;
    hellinger_dense(&a, &b)
}

/// Both distributions as dense vectors over the sorted union of their pairs.
pub fn aligned(p: &SparseCooccurrence, q: &SparseCooccurrence) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.displacements() != q.displacements() {
        return Err(Error::Incompatible("displacement sets differ".into()));
    }
    let (pe, qe) = (p.entries(), q.entries());
    let mut a = Vec::with_capacity(pe.len().max(qe.len()));
    let mut b = Vec::with_capacity(a.capacity());
    let (mut i, mut j) = (0, 0);
    while i < pe.len() || j < qe.len() {
        let order = match (pe.get(i), qe.get(j)) {
            (Some(x), Some(y)) => x.0.cmp(&y.0),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match order {
            std::cmp::Ordering::Less => {
                a.push(pe[i].1);
                b.push(0.0);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                a.push(0.0);
                b.push(qe[j].1);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                a.push(pe[i].1);
                b.push(qe[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    Ok((a, b))
}

/// Alternative distances used for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    Hellinger,
    Cosine,
    /// KL(p || q) after additive smoothing with [`KL_SMOOTHING`] and renormalization.
    Kl,
    /// 1-D earth mover's distance using index order as the ground metric.
    Emd1d,
}

pub const KL_SMOOTHING: f64 = 1e-8;

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hellinger" => DistanceKind::Hellinger,
            "cosine" => DistanceKind::Cosine,
            "kl" => DistanceKind::Kl,
            "emd1d" => DistanceKind::Emd1d,
            _ => return Err(crate::error::invalid(format!("unknown distance '{s}'"))),
        })
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceKind::Hellinger => "hellinger",
            DistanceKind::Cosine => "cosine",
            DistanceKind::Kl => "kl",
            DistanceKind::Emd1d => "emd1d",
        })
    }
}

pub fn alt_distance(p: &[f64], q: &[f64], kind: DistanceKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Incompatible(format!("lengths differ: {} vs {}", p.len(), q.len())));
    }
    Ok(match kind {
        DistanceKind::Hellinger => hellinger_dense(p, q)?,
        DistanceKind::Cosine => {
            let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
            let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
            match (np == 0.0, nq == 0.0) {
                (true, true) => 0.0,
                (true, false) | (false, true) => 1.0,
                _ => 1.0 - dot / (np * nq),
            }
        }
        DistanceKind::Kl => {
            let smooth = |v: &[f64]| {
                let total: f64 = v.iter().map(|x| x + KL_SMOOTHING).sum();
                v.iter().map(|x| (x + KL_SMOOTHING) / total).collect::<Vec<_>>()
            };
            let (ps, qs) = (smooth(p), smooth(q));
            ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
        }
        DistanceKind::Emd1d => {
            let (mut cp, mut cq, mut acc) = (0.0, 0.0, 0.0);
            for (a, b) in p.iter().zip(q) {
                cp += a;
                cq += b;
                acc += (cp - cq).abs();
            }
            acc
        }
    })
}

/// Vocabulary distance, local-structure distance, and their mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChdReport {
    pub chd_1d: f64,
    pub chd_2d: f64,
    pub chd: f64,
}

impl ChdReport {
    fn new(chd_1d: f64, chd_2d: f64) -> Self {
        ChdReport { chd_1d, chd_2d, chd: (chd_1d + chd_2d) / 2.0 }
    }

    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!("chd_1d={}\nchd_2d={}\nchd={}\n", self.chd_1d, self.chd_2d, self.chd)
    }
}

pub fn chd(real: &TokenDataset, gen: &TokenDataset, disp: &DisplacementSet) -> Result<ChdReport> {
    chd_with(real, gen, disp, DistanceKind::Hellinger, Execution::default())
}

/// CHD with the distance used for both components swapped out.
pub fn chd_with(
    real: &TokenDataset,
    gen: &TokenDataset,
    disp: &DisplacementSet,
    kind: DistanceKind,
    exec: Execution,
) -> Result<ChdReport> {
    real.check_compatible(gen)?;
    let (ur, ug) = (unigram_with(real, exec)?, unigram_with(gen, exec)?);
    let (cr, cg) = (cooccurrence_with(real, disp, exec)?, cooccurrence_with(gen, disp, exec)?);
    chd_from_stats(&ur, &ug, &cr, &cg, kind)
}

/// CHD from precomputed statistics.
pub fn chd_from_stats(
    unigram_real: &UnigramHistogram,
    unigram_gen: &UnigramHistogram,
    cooc_real: &SparseCooccurrence,
    cooc_gen: &SparseCooccurrence,
    kind: DistanceKind,
) -> Result<ChdReport> {
    if kind == DistanceKind::Hellinger {
        return Ok(ChdReport::new(
            hellinger(unigram_real, unigram_gen)?,
            hellinger_sparse(cooc_real, cooc_gen)?,
        ));
    }
    if unigram_real.codebook_size() != unigram_gen.codebook_size() {
        return Err(Error::Incompatible("codebook sizes differ".into()));
    }
    let d1 = alt_distance(&unigram_real.probs(), &unigram_gen.probs(), kind)?;
    let (a, b) = aligned(cooc_real, cooc_gen)?;
    let d2 = alt_distance(&a, &b, kind)?;
    Ok(ChdReport::new(d1, d2))
}

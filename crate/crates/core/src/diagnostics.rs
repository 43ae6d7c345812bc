//! Information-theoretic token statistics, in nats.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, shards, Execution};
use crate::histograms::{unigram_with, DisplacementSet};
use crate::token_io::TokenDataset;

fn entropy_of_counts<I: IntoIterator<Item = u64>>(counts: I, total: u64) -> f64 {
    let t = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / t;
            -p * p.ln()
        })
        .sum()
}

/// Shannon entropy of the dataset's unigram distribution.
pub fn token_entropy(dataset: &TokenDataset) -> Result<f64> {
    let h = unigram_with(dataset, Execution::default())?;
    Ok(entropy_of_counts(h.counts().iter().copied(), h.total_count()))
}

/// Mutual information between a token and its neighbor, averaged over
/// displacements.
///
/// For each displacement the directed joint of `(c(p), c(p + d))` is counted
/// and `I = H(U) + H(V) - H(U, V)` is computed with both marginals taken from
/// that joint.
pub fn adjacent_mi(dataset: &TokenDataset, disp: &DisplacementSet) -> Result<f64> {
    adjacent_mi_with(dataset, disp, Execution::default())
}

pub fn adjacent_mi_with(dataset: &TokenDataset, disp: &DisplacementSet, exec: Execution) -> Result<f64> {
    let layout = dataset.require_layout()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (rows, cols) = (layout.rows as i64, layout.cols as i64);
    let k = dataset.codebook().len();
    let mut total_mi = 0.0;
    for &(dx, dy) in disp.as_slice() {
        let (dx, dy) = (dx as i64, dy as i64);
        if dx.abs() >= cols || dy.abs() >= rows {
            return Err(invalid(format!("displacement ({dx},{dy}) leaves no valid pairs")));
        }
        let (x0, x1) = (0.max(-dx), cols.min(cols - dx));
        let (y0, y1) = (0.max(-dy), rows.min(rows - dy));
        let parts = shards(dataset.len(), 256);
        let partial = map_range(exec, parts.len(), |i| {
            let mut joint: HashMap<u64, u64> = HashMap::new();
            for s in parts[i].clone() {
                let seq = dataset.sequence(s);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let u = seq[(y * cols + x) as usize] as u64;
                        let v = seq[((y + dy) * cols + x + dx) as usize] as u64;
                        *joint.entry((u << 32) | v).or_insert(0) += 1;
                    }
                }
            }
            joint
        });
        let mut joint: HashMap<u64, u64> = HashMap::new();
        for part in partial {
            for (key, c) in part {
                *joint.entry(key).or_insert(0) += c;
            }
        }
        let mut left = vec![0u64; k];
        let mut right = vec![0u64; k];
        let mut total = 0u64;
        let mut joint_counts: Vec<(u64, u64)> = joint.into_iter().collect();
        joint_counts.sort_unstable();
        for &(key, c) in &joint_counts {
            left[(key >> 32) as usize] += c;
            right[(key & 0xFFFF_FFFF) as usize] += c;
            total += c;
        }
        let h_u = entropy_of_counts(left, total);
        let h_v = entropy_of_counts(right, total);
        let h_uv = entropy_of_counts(joint_counts.iter().map(|&(_, c)| c), total);
        total_mi += (h_u + h_v - h_uv).max(0.0);
    }
    Ok(total_mi / disp.len() as f64)
}

//! Dense brute-force reference implementations and random instances.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenmetric::token_io::{Codebook, FeatureSet, GridLayout, TokenDataset};

/// Random dataset with K <= 16 and a grid of at most 8x8.
pub fn random_dataset(seed: u64) -> TokenDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=16u32);
    let rows = rng.random_range(2..=8u32);
    let cols = rng.random_range(2..=8u32);
    let n = rng.random_range(1..=12usize);
    // skewed draws so some tokens never appear
    let ids = (0..n * (rows * cols) as usize)
        .map(|_| {
            let a = rng.random_range(0..k);
            let b = rng.random_range(0..k);
            a.min(b)
        })
        .collect();
    TokenDataset::from_flat(Codebook::new(k).unwrap(), (rows * cols) as usize, Some(GridLayout::new(rows, cols).unwrap()), ids)
        .unwrap()
}

pub fn random_features(seed: u64, dim: usize, n: usize, shift: f64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0) + shift).collect()).collect();
    FeatureSet::from_rows(dim, &rows).unwrap()
}

pub fn unigram(ds: &TokenDataset) -> Vec<f64> {
    let k = ds.codebook().len();
    let mut p = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..ds.len() {
        for &t in ds.sequence(i) {
            p[t as usize] += 1.0;
            total += 1.0;
        }
    }
    p.iter().map(|c| c / total).collect()
}

fn cell(ds: &TokenDataset, s: usize, x: i64, y: i64) -> Option<usize> {
    let l = ds.layout().unwrap();
    if x < 0 || y < 0 || x >= l.cols as i64 || y >= l.rows as i64 {
        return None;
    }
    Some(ds.sequence(s)[(y * l.cols as i64 + x) as usize] as usize)
}

/// Dense directed joint `P[u][v]` of (token, token at +d).
pub fn directed_joint(ds: &TokenDataset, dx: i32, dy: i32) -> Vec<Vec<f64>> {
    let k = ds.codebook().len();
    let l = ds.layout().unwrap();
    let mut joint = vec![vec![0.0; k]; k];
    let mut z = 0.0;
    for s in 0..ds.len() {
        for y in 0..l.rows as i64 {
            for x in 0..l.cols as i64 {
                if let (Some(u), Some(v)) = (cell(ds, s, x, y), cell(ds, s, x + dx as i64, y + dy as i64)) {
                    joint[u][v] += 1.0;
                    z += 1.0;
                }
            }
        }
    }
    joint.iter().map(|r| r.iter().map(|c| c / z).collect()).collect()
}

/// Symmetrized, displacement-averaged co-occurrence as a dense matrix.
pub fn symmetric_cooc(ds: &TokenDataset, disp: &[(i32, i32)]) -> Vec<Vec<f64>> {
    let k = ds.codebook().len();
    let mut avg = vec![vec![0.0; k]; k];
    for &(dx, dy) in disp {
        let p = directed_joint(ds, dx, dy);
        for u in 0..k {
            for v in 0..k {
                avg[u][v] += 0.5 * (p[u][v] + p[v][u]) / disp.len() as f64;
            }
        }
    }
    avg
}

/// Unordered-pair masses `{u, v}` (u <= v) from the symmetric matrix.
pub fn unordered_cooc(ds: &TokenDataset, disp: &[(i32, i32)]) -> Vec<((u32, u32), f64)> {
    let m = symmetric_cooc(ds, disp);
    let mut out = Vec::new();
    for u in 0..m.len() {
        for v in u..m.len() {
            let mass = if u == v { m[u][u] } else { m[u][v] + m[v][u] };
            out.push(((u as u32, v as u32), mass));
        }
    }
    out
}

pub fn adjacent_mi(ds: &TokenDataset, disp: &[(i32, i32)]) -> f64 {
    let mut total = 0.0;
    for &(dx, dy) in disp {
        let p = directed_joint(ds, dx, dy);
        let k = p.len();
        let left: Vec<f64> = (0..k).map(|u| p[u].iter().sum()).collect();
        let right: Vec<f64> = (0..k).map(|v| (0..k).map(|u| p[u][v]).sum()).collect();
        let mut mi = 0.0;
        for u in 0..k {
            for v in 0..k {
                if p[u][v] > 0.0 {
                    mi += p[u][v] * (p[u][v] / (left[u] * right[v])).ln();
                }
            }
        }
        total += mi;
    }
    total / disp.len() as f64
}

pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    (s / 2.0).sqrt()
}

pub fn mmd2(x: &FeatureSet, y: &FeatureSet) -> f64 {
    let rows = |f: &FeatureSet| (0..f.len()).map(|i| f.row(i).to_vec()).collect::<Vec<_>>();
    let (xs, ys) = (rows(x), rows(y));
    let pooled: Vec<&Vec<f64>> = xs.iter().chain(&ys).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in 0..i {
            d.push(dist(pooled[i], pooled[j]));
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if d.len() % 2 == 1 { d[d.len() / 2] } else { (d[d.len() / 2 - 1] + d[d.len() / 2]) / 2.0 };
    let kern = |a: &[f64], b: &[f64]| (-dist(a, b).powi(2) / (2.0 * median * median)).exp();
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += kern(u, v);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    mean(&xs, &xs) + mean(&ys, &ys) - 2.0 * mean(&xs, &ys)
}

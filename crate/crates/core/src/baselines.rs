//! Continuous-feature reference metrics: Fréchet distance between Gaussian
//! fits and kernel MMD with a median-heuristic RBF bandwidth.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, pairwise_sum, Execution};
use crate::token_io::FeatureSet;

/// Mean and (unbiased) covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianFit {
    /// Builds a fit from a mean and a row-major covariance, which must be
    /// square, symmetric and finite.
    pub fn from_parts(mean: &[f64], cov: &[f64]) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(invalid(format!("covariance must be {d}x{d}")));
        }
        if let Some(i) = mean.iter().chain(cov).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let cov = DMatrix::from_row_slice(d, d, cov);
        if cov != cov.transpose() {
            return Err(invalid("covariance is not symmetric"));
        }
        Ok(GaussianFit { mean: DVector::from_column_slice(mean), cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_gaussian(features: &FeatureSet) -> Result<GaussianFit> {
    let n = features.len();
    if n < 2 {
        return Err(invalid(format!("need at least 2 vectors to fit a Gaussian, got {n}")));
    }
    let d = features.dim();
    let mut mean = DVector::zeros(d);
    for row in features.rows() {
        mean += DVector::from_column_slice(row);
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(n, d);
    for (i, row) in features.rows().enumerate() {
        for j in 0..d {
            centered[(i, j)] = row[j] - mean[j];
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianFit { mean, cov })
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the matrix square root is taken from the eigenvalues of the
/// symmetric matrix `S_a^(1/2) S_b S_a^(1/2)`, which has the same spectrum as
/// `S_a S_b`; negative eigenvalues (roundoff) are clamped to zero.
pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Incompatible(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let root_a = sqrt_psd(&a.cov);
    let inner = &root_a * &b.cov * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let trace_sqrt: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let fd = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
    if !fd.is_finite() {
        return Err(Error::Numeric(format!("Fréchet distance is {fd}")));
    }
    Ok(fd.max(0.0))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over the pooled sets.
pub fn median_distance(x: &FeatureSet, y: &FeatureSet) -> f64 {
    let pooled: Vec<&[f64]> = x.rows().chain(y.rows()).collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        (d[m - 1] + d[m]) / 2.0
    }
}

/// Biased (V-statistic) squared MMD with kernel `exp(-|a-b|^2 / (2 bw^2))`.
///
/// `bandwidth = None` uses the median heuristic; a zero median returns 0.
pub fn mmd2(x: &FeatureSet, y: &FeatureSet, bandwidth: Option<f64>) -> Result<f64> {
    mmd2_with(x, y, bandwidth, Execution::default())
}

pub fn mmd2_with(x: &FeatureSet, y: &FeatureSet, bandwidth: Option<f64>, exec: Execution) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return Err(invalid("MMD needs at least 2 vectors per set"));
    }
    mmd2_raw(x, y, bandwidth, exec)
}

pub(crate) fn mmd2_raw(x: &FeatureSet, y: &FeatureSet, bandwidth: Option<f64>, exec: Execution) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Incompatible(format!("dimensions differ: {} vs {}", x.dim(), y.dim())));
    }
    let bw = match bandwidth {
        Some(b) if !(b.is_finite() && b > 0.0) => return Err(invalid(format!("bad bandwidth {b}"))),
        Some(b) => b,
        None => {
            let m = median_distance(x, y);
            if m == 0.0 {
                return Ok(0.0);
            }
            m
        }
    };
    let gamma = 1.0 / (2.0 * bw * bw);
    let k = |a: &[f64], b: &[f64]| (-gamma * sq_dist(a, b)).exp();
    let row_sum = |a: &[f64], set: &FeatureSet| {
        let v: Vec<f64> = set.rows().map(|b| k(a, b)).collect();
        pairwise_sum(&v)
    };
    let (m, n) = (x.len(), y.len());
    let xx = map_range(exec, m, |i| row_sum(x.row(i), x));
    let xy = map_range(exec, m, |i| row_sum(x.row(i), y));
    let yy = map_range(exec, n, |i| row_sum(y.row(i), y));
    let (m, n) = (m as f64, n as f64);
    let v = pairwise_sum(&xx) / (m * m) + pairwise_sum(&yy) / (n * n) - 2.0 * pairwise_sum(&xy) / (m * n);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("MMD is {v}")));
    }
    Ok(v.max(0.0))
}

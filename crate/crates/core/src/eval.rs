//! Agreement between a metric and reference scores, and sample-size sweeps.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{fit_gaussian, frechet_distance};
use crate::distances::{chd_with, DistanceKind};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Execution};
use crate::histograms::DisplacementSet;
use crate::synth::derive_seed;
use crate::token_io::{FeatureSet, TokenDataset};

/// A correlation coefficient. `degenerate` is set when one input has no
/// variance, in which case `value` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

impl Correlation {
    fn degenerate() -> Self {
        Correlation { value: 0.0, degenerate: true }
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(invalid(format!("score lists differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(invalid("at least two scores are required"));
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// 1-based ranks; tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Correlation::degenerate();
    }
    Correlation { value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), degenerate: false }
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check_pair(a, b)?;
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Kendall's tau-b.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            match (da, db) {
                (0, 0) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_a) * (pairs - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Ok(Correlation::degenerate());
    }
    Ok(Correlation { value: (concordant - discordant) as f64 / denom, degenerate: false })
}

/// Whether larger metric values mean better quality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Direction {
    #[default]
    HigherBetter,
    LowerBetter,
}

impl Direction {
    fn align(self, v: f64) -> f64 {
        match self {
            Direction::HigherBetter => v,
            Direction::LowerBetter => -v,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher" | "higher_better" => Ok(Direction::HigherBetter),
            "lower" | "lower_better" => Ok(Direction::LowerBetter),
            _ => Err(invalid(format!("unknown direction {s:?} (expected higher or lower)"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::HigherBetter => "higher",
            Direction::LowerBetter => "lower",
        })
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let v: Vec<f64> = values.collect();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(invalid("cannot normalize a constant score list"));
    }
    Ok(v.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

/// Mean squared difference after aligning the metric's direction and
/// min-max scaling both lists to [0, 1].
pub fn nmse(metric: &[f64], human: &[f64], direction: Direction) -> Result<f64> {
    check_pair(metric, human)?;
    let m = min_max(metric.iter().map(|&v| direction.align(v)))?;
    let h = min_max(human.iter().copied())?;
    Ok(m.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m.len() as f64)
}

/// Fraction of pairs with distinct human scores that the metric orders the
/// same way; metric ties score one half.
pub fn pairwise_accuracy(metric: &[f64], human: &[f64], direction: Direction) -> Result<f64> {
    check_pair(metric, human)?;
    let (mut agree, mut pairs) = (0.0, 0usize);
    for i in 0..metric.len() {
        for j in i + 1..metric.len() {
            let h = human[i].total_cmp(&human[j]);
            if h.is_eq() {
                continue;
            }
            pairs += 1;
            let m = direction.align(metric[i]).total_cmp(&direction.align(metric[j]));
            if m.is_eq() {
                agree += 0.5;
            } else if m == h {
                agree += 1.0;
            }
        }
    }
    if pairs == 0 {
        return Err(invalid("no pairs with distinct reference scores"));
    }
    Ok(agree / pairs as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationReport {
    pub spearman: f64,
    pub kendall: f64,
    pub nmse: f64,
    pub pairwise_accuracy: f64,
    pub n: usize,
    /// Set when either input has no rank variance.
    pub degenerate: bool,
}

/// All agreement measures at once. N-MSE is reported as NaN when either
/// list is constant.
pub fn correlate(metric: &[f64], human: &[f64], direction: Direction) -> Result<CorrelationReport> {
    let s = spearman(metric, human)?;
    let k = kendall(metric, human)?;
    Ok(CorrelationReport {
        spearman: s.value,
        kendall: k.value,
        nmse: nmse(metric, human, direction).unwrap_or(f64::NAN),
        pairwise_accuracy: pairwise_accuracy(metric, human, direction).unwrap_or(f64::NAN),
        n: metric.len(),
        degenerate: s.degenerate || k.degenerate,
    })
}

/// Parses `id value` lines. Blank lines and `#` comments are skipped.
pub fn read_scores<R: BufRead>(source: R) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        let mut fields = line.split_whitespace();
        let (Some(id), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse("expected two columns: id value"));
        };
        let value: f64 = value.parse().map_err(|_| parse("value is not a number"))?;
        if !value.is_finite() {
            return Err(parse("value is not finite"));
        }
        out.push((id.to_string(), value));
    }
    Ok(out)
}

/// Pairs two score tables by id, in the order of `metric`. Every id must
/// appear exactly once in each table.
pub fn align_scores(metric: &[(String, f64)], human: &[(String, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lookup = HashMap::with_capacity(human.len());
    for (id, v) in human {
        if lookup.insert(id.as_str(), *v).is_some() {
            return Err(invalid(format!("duplicate id {id:?} in reference scores")));
        }
    }
    if metric.len() != human.len() {
        return Err(invalid(format!("score tables differ in size ({} vs {})", metric.len(), human.len())));
    }
    let mut seen = std::collections::HashSet::with_capacity(metric.len());
    let mut a = Vec::with_capacity(metric.len());
    let mut b = Vec::with_capacity(metric.len());
    for (id, v) in metric {
        if !seen.insert(id.as_str()) {
            return Err(invalid(format!("duplicate id {id:?} in metric scores")));
        }
        let h = lookup.get(id.as_str()).ok_or_else(|| invalid(format!("id {id:?} missing from reference scores")))?;
        a.push(*v);
        b.push(*h);
    }
    Ok((a, b))
}

/// Statistic computed on each subsample pair of a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepMetric {
    #[default]
    Chd,
    /// Fréchet distance between Gaussian fits of per-sequence token
    /// frequency vectors (dimension K).
    FrechetUnigram,
}

impl FromStr for SweepMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chd" => Ok(SweepMetric::Chd),
            "frechet-unigram" | "frechet" => Ok(SweepMetric::FrechetUnigram),
            _ => Err(invalid(format!("unknown sweep metric {s:?}"))),
        }
    }
}

impl fmt::Display for SweepMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMetric::Chd => "chd",
            SweepMetric::FrechetUnigram => "frechet-unigram",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub sample_sizes: Vec<usize>,
    pub means: Vec<f64>,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub stddevs: Vec<f64>,
}

impl SweepResult {
    /// `stddev / mean` per size.
    pub fn coefficients_of_variation(&self) -> Vec<f64> {
        self.means.iter().zip(&self.stddevs).map(|(m, s)| s / m).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub metric: SweepMetric,
    pub displacements: DisplacementSet,
}

fn unigram_features(ds: &TokenDataset) -> Result<FeatureSet> {
    let k = ds.codebook().len();
    let inv = 1.0 / ds.seq_len() as f64;
    let mut fs = FeatureSet::new(k)?;
    let mut row = vec![0.0; k];
    for seq in ds.sequences() {
        row.fill(0.0);
        for &t in seq {
            row[t as usize] += inv;
        }
        fs.push(&row)?;
    }
    Ok(fs)
}

fn sweep_metric(real: &TokenDataset, gen: &TokenDataset, cfg: &SweepConfig) -> Result<f64> {
    match cfg.metric {
        SweepMetric::Chd => {
            Ok(chd_with(real, gen, &cfg.displacements, DistanceKind::Hellinger, Execution::Sequential)?.chd)
        }
        SweepMetric::FrechetUnigram => {
            frechet_distance(&fit_gaussian(&unigram_features(real)?)?, &fit_gaussian(&unigram_features(gen)?)?)
        }
    }
}

/// For each size, draws `repeats` pairs of subsamples without replacement
/// and records the mean and spread of the metric.
pub fn sample_sweep(real: &TokenDataset, gen: &TokenDataset, cfg: &SweepConfig) -> Result<SweepResult> {
    sample_sweep_with(real, gen, cfg, Execution::default())
}

pub fn sample_sweep_with(
    real: &TokenDataset,
    gen: &TokenDataset,
    cfg: &SweepConfig,
    exec: Execution,
) -> Result<SweepResult> {
    real.check_compatible(gen)?;
    if cfg.repeats == 0 || cfg.sizes.is_empty() {
        return Err(invalid("sweep needs at least one size and one repeat"));
    }
    let limit = real.len().min(gen.len());
    if let Some(&s) = cfg.sizes.iter().find(|&&s| s > limit || s == 0) {
        return Err(invalid(format!("sample size {s} is outside 1..={limit}")));
    }
    let mut result = SweepResult { sample_sizes: cfg.sizes.clone(), means: Vec::new(), stddevs: Vec::new() };
    for (si, &size) in cfg.sizes.iter().enumerate() {
        let values: Vec<f64> = map_range(exec, cfg.repeats, |r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, si as u64), r as u64));
            let a = rand::seq::index::sample(&mut rng, real.len(), size).into_vec();
            let b = rand::seq::index::sample(&mut rng, gen.len(), size).into_vec();
            sweep_metric(&real.select(&a), &gen.select(&b), cfg)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        result.means.push(mean);
        result.stddevs.push(sd);
    }
    Ok(result)
}

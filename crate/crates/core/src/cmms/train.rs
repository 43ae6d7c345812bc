//! AdamW training of the regressor on synthetically degraded sequences.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corruption::{corrupt_sample, CorruptionSpec, MAX_SEVERITY};
use super::model::{loss_and_grad_with, RegressorConfig, RegressorParams};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, Execution};
use crate::image::DegradeSpec;
use crate::synth::derive_seed;
use crate::token_io::{TokenDataset, TokenSequence};

/// Probability that a training sample also gets a fragment swap.
pub const SWAP_PROBABILITY: f64 = 0.3;
/// Upper end of the sampled swap fraction.
pub const MAX_TRAIN_SWAP: f64 = 0.15;
/// Probability that a swap takes its fragment from another sequence.
pub const PARTNER_PROBABILITY: f64 = 0.5;
/// Size of the fixed probe set used to report losses.
const PROBE_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 0.01,
            batch_size: 512,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small-batch, short-run preset for the d=64 regressor.
    pub fn test_scale(seed: u64) -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 32, epochs: 10, seed, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.beta1, self.beta2, self.eps];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(invalid("optimizer hyperparameters must be positive"));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(invalid("adam betas must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("batch size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamW {
    pub fn new(cfg: TrainConfig, len: usize) -> Self {
        AdamW { cfg, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = &self.cfg;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let step = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            *p -= c.learning_rate * (step + c.weight_decay * *p);
        }
    }
}

/// Losses recorded during training, measured on a fixed probe set of
/// degraded samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Draws one training degradation. The swap is dropped when its block would
/// be empty on a sequence of `seq_len` positions.
pub fn sample_spec<R: Rng>(rng: &mut R, seq_len: usize, pixel: Option<DegradeSpec>) -> CorruptionSpec {
    let p_uniform = rng.random_range(0.0..=MAX_SEVERITY);
    let mut swap_fraction = 0.0;
    if rng.random_bool(SWAP_PROBABILITY) {
        let f = rng.random_range(0.0..=MAX_TRAIN_SWAP);
        if (f * seq_len as f64).round() >= 1.0 {
            swap_fraction = f;
        }
    }
    CorruptionSpec { p_uniform, swap_fraction, pixel, seed: rng.random() }
}

struct Job {
    index: usize,
    spec: CorruptionSpec,
    partner: Option<usize>,
}

fn draw_jobs<R: Rng>(rng: &mut R, indices: &[usize], n: usize, seq_len: usize, pixel: Option<&[Option<DegradeSpec>]>) -> Vec<Job> {
    indices
        .iter()
        .map(|&index| {
            let spec = sample_spec(rng, seq_len, pixel.and_then(|p| p[index]));
            let partner = (spec.swap_fraction > 0.0 && n > 1 && rng.random_bool(PARTNER_PROBABILITY))
                .then(|| (index + rng.random_range(1..n)) % n);
            Job { index, spec, partner }
        })
        .collect()
}

fn build_pairs(dataset: &TokenDataset, jobs: &[Job], exec: Execution) -> Result<Vec<(TokenSequence, f64)>> {
    map_range(exec, jobs.len(), |j| {
        let job = &jobs[j];
        corrupt_sample(
            dataset.sequence(job.index),
            &job.spec,
            job.partner.map(|p| dataset.sequence(p)),
            dataset.codebook(),
            dataset.layout(),
        )
    })
    .into_iter()
    .collect()
}

fn batch_loss(params: &RegressorParams, pairs: &[(TokenSequence, f64)], exec: Execution) -> Result<(f64, Vec<f64>)> {
    let batch: Vec<(&[u32], f64)> = pairs.iter().map(|(s, t)| (s.ids(), *t)).collect();
    loss_and_grad_with(params, &batch, exec)
}

/// Trains from a seeded initialization. Returns the final weights and the
/// probe-set loss before training and after every epoch.
pub fn train(dataset: &TokenDataset, tcfg: &TrainConfig, rcfg: RegressorConfig) -> Result<(RegressorParams, TrainLog)> {
    train_with(dataset, None, tcfg, rcfg, Execution::default())
}

/// As [`train`]; `pixel` optionally carries the upstream pixel degradation
/// of each sequence, whose severity is folded into the target.
pub fn train_with(
    dataset: &TokenDataset,
    pixel: Option<&[Option<DegradeSpec>]>,
    tcfg: &TrainConfig,
    rcfg: RegressorConfig,
    exec: Execution,
) -> Result<(RegressorParams, TrainLog)> {
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.codebook() != rcfg.codebook || dataset.seq_len() != rcfg.seq_len {
        return Err(Error::Incompatible("dataset shape does not match regressor config".into()));
    }
    if pixel.is_some_and(|p| p.len() != dataset.len()) {
        return Err(invalid("one pixel degradation entry per sequence is required"));
    }

    let n = dataset.len();
    let seq_len = dataset.seq_len();
    let mut params = RegressorParams::init(rcfg)?;
    let mut opt = AdamW::new(*tcfg, params.len());

    let mut probe_rng = ChaCha8Rng::seed_from_u64(derive_seed(tcfg.seed, u64::MAX));
    let probe_idx: Vec<usize> = (0..PROBE_SIZE.min(n)).map(|_| probe_rng.random_range(0..n)).collect();
    let probe = build_pairs(dataset, &draw_jobs(&mut probe_rng, &probe_idx, n, seq_len, pixel), exec)?;

    let mut log = TrainLog { initial_loss: batch_loss(&params, &probe, exec)?.0, epoch_losses: Vec::new() };
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..tcfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tcfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let pairs = build_pairs(dataset, &draw_jobs(&mut rng, chunk, n, seq_len, pixel), exec)?;
            let (loss, grad) = batch_loss(&params, &pairs, exec)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training diverged in epoch {epoch}")));
            }
            opt.update(params.values_mut(), &grad);
            if let Some(i) = params.values().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameter {i} became non-finite in epoch {epoch}")));
            }
        }
        log.epoch_losses.push(batch_loss(&params, &probe, exec)?.0);
    }
    Ok((params, log))
}

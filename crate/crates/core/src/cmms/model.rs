//! Transformer sequence regressor with exact reverse-mode gradients.
//!
//! Architecture: token embedding plus interleaved sinusoidal positions, then
//! `num_layers` pre-norm blocks (multi-head self-attention and a `4d` GELU
//! feed-forward, each with a residual), mean pooling over positions, a
//! two-layer GELU head, and a logistic output in (0, 1).
//!
//! All parameters live in one flat `f64` buffer. Matrices are row-major with
//! shape `(in, out)`, applied as `y = x W + b`. Buffer order (also the
//! checkpoint order):
//!
//! 1. `embed` `[K, d]`
//! 2. per layer: `ln1_gamma [d]`, `ln1_beta [d]`, `wq [d, d]`, `bq [d]`,
//!    `wk [d, d]`, `bk [d]`, `wv [d, d]`, `bv [d]`, `wo [d, d]`, `bo [d]`,
//!    `ln2_gamma [d]`, `ln2_beta [d]`, `w1 [d, 4d]`, `b1 [4d]`,
//!    `w2 [4d, d]`, `b2 [d]`
//! 3. `head_w1 [d, m]`, `head_b1 [m]`, `head_w2 [m]`, `head_b2 [1]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::exec::{map_range, shards, Execution};
use crate::token_io::{Codebook, TokenDataset};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegressorConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_hidden: usize,
    pub seq_len: usize,
    pub codebook: Codebook,
    pub seed: u64,
}

impl RegressorConfig {
    /// d=512, 2 layers, 8 heads, 512-wide head.
    pub fn full_scale(seq_len: usize, codebook: Codebook, seed: u64) -> Self {
        RegressorConfig { embed_dim: 512, num_layers: 2, num_heads: 8, mlp_hidden: 512, seq_len, codebook, seed }
    }

    /// d=64, 2 layers, 8 heads, 64-wide head.
    pub fn test_scale(seq_len: usize, codebook: Codebook, seed: u64) -> Self {
        RegressorConfig { embed_dim: 64, num_layers: 2, num_heads: 8, mlp_hidden: 64, seq_len, codebook, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.mlp_hidden == 0 || self.seq_len == 0 {
            return Err(invalid("regressor dimensions must be positive"));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(invalid(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn ffn_hidden(&self) -> usize {
        4 * self.embed_dim
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Length of the flat parameter buffer, or `None` on overflow.
    pub fn param_count(&self) -> Option<usize> {
        let (d, m, k) = (self.embed_dim, self.mlp_hidden, self.codebook.len());
        let f = d.checked_mul(4)?;
        let per_layer = d.checked_mul(d)?.checked_mul(4)?.checked_add(d.checked_mul(f)?.checked_mul(2)?)?.checked_add(d.checked_mul(9)?)?.checked_add(f)?;
        k.checked_mul(d)?
            .checked_add(per_layer.checked_mul(self.num_layers)?)?
            .checked_add(d.checked_mul(m)?)?
            .checked_add(m.checked_mul(2)?)?
            .checked_add(1)
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    embed: usize,
    layers: Vec<LayerOffsets>,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
    total: usize,
}

impl Layout {
    fn new(c: &RegressorConfig) -> Layout {
        let (d, f, m, k) = (c.embed_dim, c.ffn_hidden(), c.mlp_hidden, c.codebook.len());
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let embed = take(k * d);
        let layers = (0..c.num_layers)
            .map(|_| LayerOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                wq: take(d * d),
                bq: take(d),
                wk: take(d * d),
                bk: take(d),
                wv: take(d * d),
                bv: take(d),
                wo: take(d * d),
                bo: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * f),
                b1: take(f),
                w2: take(f * d),
                b2: take(d),
            })
            .collect();
        let head_w1 = take(d * m);
        let head_b1 = take(m);
        let head_w2 = take(m);
        let head_b2 = take(1);
        Layout { embed, layers, head_w1, head_b1, head_w2, head_b2, total: at }
    }
}

/// Regressor weights in one flat buffer (see the module docs for the order).
#[derive(Clone, Debug, PartialEq)]
pub struct RegressorParams {
    config: RegressorConfig,
    values: Vec<f64>,
}

impl RegressorParams {
    /// Seeded initialization: unit-normal embeddings, `N(0, 1/fan_in)`
    /// weights, zero biases, unit layer-norm gains.
    pub fn init(config: RegressorConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fill = |values: &mut [f64], std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            values.iter_mut().for_each(|v| *v = n.sample(&mut rng));
        };
        let (d, f, m, k) = (config.embed_dim, config.ffn_hidden(), config.mlp_hidden, config.codebook.len());
        fill(&mut values[layout.embed..layout.embed + k * d], 1.0);
        for l in &layout.layers {
            values[l.ln1_g..l.ln1_g + d].fill(1.0);
            values[l.ln2_g..l.ln2_g + d].fill(1.0);
            for w in [l.wq, l.wk, l.wv, l.wo] {
                fill(&mut values[w..w + d * d], 1.0 / (d as f64).sqrt());
            }
            fill(&mut values[l.w1..l.w1 + d * f], 1.0 / (d as f64).sqrt());
            fill(&mut values[l.w2..l.w2 + f * d], 1.0 / (f as f64).sqrt());
        }
        fill(&mut values[layout.head_w1..layout.head_w1 + d * m], 1.0 / (d as f64).sqrt());
        fill(&mut values[layout.head_w2..layout.head_w2 + m], 1.0 / (m as f64).sqrt());
        Ok(RegressorParams { config, values })
    }

    /// Wraps an existing buffer, checking its length and finiteness.
    pub fn from_values(config: RegressorConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_count().ok_or_else(|| invalid("regressor too large"))?;
        if values.len() != expected {
            return Err(invalid(format!("expected {expected} parameters, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RegressorParams { config, values })
    }

    pub fn config(&self) -> &RegressorConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_sequence(&self, seq: &[u32]) -> Result<()> {
        if seq.len() != self.config.seq_len {
            return Err(Error::Incompatible(format!(
                "sequence length {} does not match regressor length {}",
                seq.len(),
                self.config.seq_len
            )));
        }
        if let Some(&id) = seq.iter().find(|&&t| t >= self.config.codebook.size()) {
            return Err(Error::TokenOutOfRange { id, codebook: self.config.codebook.size() });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// dense kernels on row-major slices

/// `out[n, m] = a[n, k] * b[k, m] + bias[m]`
fn linear(a: &[f64], b: &[f64], bias: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        out.extend_from_slice(bias);
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Backward of [`linear`]: accumulates `dW += a^T dout`, `dbias += sum dout`
/// and returns `da = dout * W^T`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    a: &[f64],
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    n: usize,
    k: usize,
    m: usize,
) -> Vec<f64> {
    let mut da = vec![0.0; n * k];
    for i in 0..n {
        let drow = &dout[i * m..(i + 1) * m];
        for (g, &dv) in db.iter_mut().zip(drow) {
            *g += dv;
        }
        for p in 0..k {
            let av = a[i * k + p];
            let wrow = &w[p * m..(p + 1) * m];
            let dwrow = &mut dw[p * m..(p + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                dwrow[j] += av * drow[j];
                acc += drow[j] * wrow[j];
            }
            da[i * k + p] = acc;
        }
    }
    da
}

struct LayerNormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], n: usize, d: usize) -> (Vec<f64>, LayerNormCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = gamma[j] * h + beta[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dy: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    n: usize,
    d: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let dyr = &dy[i * d..(i + 1) * d];
        let (mut mean_dxhat, mut mean_dxhat_xhat) = (0.0, 0.0);
        for j in 0..d {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            dx[i * d + j] = cache.rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `x * Phi(x)`
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Interleaved sinusoidal encoding: `sin` on even dims, `cos` on odd dims.
pub fn positional_encoding(seq_len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; seq_len * d];
    for pos in 0..seq_len {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            pe[pos * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

// ---------------------------------------------------------------------------
// forward / backward

struct LayerCache {
    x_in: Vec<f64>,
    ln1: LayerNormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities `[heads, n, n]`.
    probs: Vec<f64>,
    attn: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: LayerNormCache,
    c: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
}

struct Cache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
    score: f64,
}

struct Model<'a> {
    cfg: &'a RegressorConfig,
    layout: Layout,
    w: &'a [f64],
    pe: Vec<f64>,
}

impl<'a> Model<'a> {
    fn new(params: &'a RegressorParams) -> Self {
        let cfg = &params.config;
        Model { cfg, layout: Layout::new(cfg), w: &params.values, pe: positional_encoding(cfg.seq_len, cfg.embed_dim) }
    }

    fn slice(&self, at: usize, len: usize) -> &'a [f64] {
        &self.w[at..at + len]
    }

    fn forward(&self, tokens: &[u32]) -> Result<Cache> {
        let (n, d, f, m) = (self.cfg.seq_len, self.cfg.embed_dim, self.cfg.ffn_hidden(), self.cfg.mlp_hidden);
        let (heads, dh) = (self.cfg.num_heads, self.cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = vec![0.0; n * d];
        for (i, &t) in tokens.iter().enumerate() {
            let e = self.slice(self.layout.embed + t as usize * d, d);
            for j in 0..d {
                x[i * d + j] = e[j] + self.pe[i * d + j];
            }
        }

        let mut layers = Vec::with_capacity(self.cfg.num_layers);
        for l in &self.layout.layers {
            let x_in = x;
            let (a, ln1) = layer_norm(&x_in, self.slice(l.ln1_g, d), self.slice(l.ln1_b, d), n, d);
            let q = linear(&a, self.slice(l.wq, d * d), self.slice(l.bq, d), n, d, d);
            let k = linear(&a, self.slice(l.wk, d * d), self.slice(l.bk, d), n, d, d);
            let v = linear(&a, self.slice(l.wv, d * d), self.slice(l.bv, d), n, d, d);

            let mut probs = vec![0.0; heads * n * n];
            let mut attn = vec![0.0; n * d];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..n {
                    let p = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let qi = &q[i * d + off..i * d + off + dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..n {
                        let kj = &k[j * d + off..j * d + off + dh];
                        let s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        p[j] = s;
                        max = max.max(s);
                    }
                    let mut total = 0.0;
                    for pj in p.iter_mut() {
                        *pj = (*pj - max).exp();
                        total += *pj;
                    }
                    for pj in p.iter_mut() {
                        *pj /= total;
                    }
                    let out = &mut attn[i * d + off..i * d + off + dh];
                    for j in 0..n {
                        let vj = &v[j * d + off..j * d + off + dh];
                        for c in 0..dh {
                            out[c] += p[j] * vj[c];
                        }
                    }
                }
            }
            let proj = linear(&attn, self.slice(l.wo, d * d), self.slice(l.bo, d), n, d, d);
            let x_mid: Vec<f64> = x_in.iter().zip(&proj).map(|(a, b)| a + b).collect();

            let (c, ln2) = layer_norm(&x_mid, self.slice(l.ln2_g, d), self.slice(l.ln2_b, d), n, d);
            let u = linear(&c, self.slice(l.w1, d * f), self.slice(l.b1, f), n, d, f);
            let z: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
            let ff = linear(&z, self.slice(l.w2, f * d), self.slice(l.b2, d), n, f, d);
            x = x_mid.iter().zip(&ff).map(|(a, b)| a + b).collect();

            layers.push(LayerCache { x_in, ln1, a, q, k, v, probs, attn, x_mid, ln2, c, u, z });
        }

        let mut pooled = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                pooled[j] += x[i * d + j];
            }
        }
        pooled.iter_mut().for_each(|v| *v /= n as f64);

        let head_pre = linear(&pooled, self.slice(self.layout.head_w1, d * m), self.slice(self.layout.head_b1, m), 1, d, m);
        let head_act: Vec<f64> = head_pre.iter().map(|&v| gelu(v)).collect();
        let w2 = self.slice(self.layout.head_w2, m);
        let logit = self.w[self.layout.head_b2] + head_act.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>();
        let score = sigmoid(logit);
        if !score.is_finite() || pooled.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite activation in regressor forward pass".into()));
        }
        Ok(Cache { tokens: tokens.to_vec(), layers, pooled, head_pre, head_act, score })
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(score)`.
    fn backward(&self, cache: &Cache, dscore: f64, grad: &mut [f64]) {
        let (n, d, f, m) = (self.cfg.seq_len, self.cfg.embed_dim, self.cfg.ffn_hidden(), self.cfg.mlp_hidden);
        let (heads, dh) = (self.cfg.num_heads, self.cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = &self.layout;

        let dlogit = dscore * cache.score * (1.0 - cache.score);
        grad[lay.head_b2] += dlogit;
        let w2 = self.slice(lay.head_w2, m);
        let mut dhead_pre = vec![0.0; m];
        for j in 0..m {
            grad[lay.head_w2 + j] += dlogit * cache.head_act[j];
            dhead_pre[j] = dlogit * w2[j] * gelu_grad(cache.head_pre[j]);
        }
        let dpooled = {
            let (dw, rest) = grad[lay.head_w1..].split_at_mut(d * m);
            let db = &mut rest[lay.head_b1 - lay.head_w1 - d * m..][..m];
            linear_backward(&cache.pooled, self.slice(lay.head_w1, d * m), &dhead_pre, dw, db, 1, d, m)
        };

        let mut dx = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                dx[i * d + j] = dpooled[j] / n as f64;
            }
        }

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // feed-forward block: x = x_mid + W2 gelu(W1 ln2(x_mid))
            let dff = dx.clone();
            let dz = {
                let (dw, db) = two_mut(grad, l.w2, f * d, l.b2, d);
                linear_backward(&lc.z, self.slice(l.w2, f * d), &dff, dw, db, n, f, d)
            };
            let du: Vec<f64> = dz.iter().zip(&lc.u).map(|(g, &u)| g * gelu_grad(u)).collect();
            let dc = {
                let (dw, db) = two_mut(grad, l.w1, d * f, l.b1, f);
                linear_backward(&lc.c, self.slice(l.w1, d * f), &du, dw, db, n, d, f)
            };
            let dxm = {
                let (dg, dbeta) = two_mut(grad, l.ln2_g, d, l.ln2_b, d);
                layer_norm_backward(&lc.ln2, self.slice(l.ln2_g, d), &dc, dg, dbeta, n, d)
            };
            let mut dx_mid = dx;
            dx_mid.iter_mut().zip(&dxm).for_each(|(a, b)| *a += b);

            // attention block: x_mid = x_in + Wo attn(ln1(x_in))
            let dattn = {
                let (dw, db) = two_mut(grad, l.wo, d * d, l.bo, d);
                linear_backward(&lc.attn, self.slice(l.wo, d * d), &dx_mid, dw, db, n, d, d)
            };
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dp = vec![0.0; n];
            for h in 0..heads {
                let off = h * dh;
                for i in 0..n {
                    let p = &lc.probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let dout = &dattn[i * d + off..i * d + off + dh];
                    let mut dot = 0.0;
                    for j in 0..n {
                        let vj = &lc.v[j * d + off..j * d + off + dh];
                        let g: f64 = dout.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dp[j] = g;
                        dot += p[j] * g;
                        let dvj = &mut dv[j * d + off..j * d + off + dh];
                        for c in 0..dh {
                            dvj[c] += p[j] * dout[c];
                        }
                    }
                    for j in 0..n {
                        let ds = p[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..dh {
                            dq[i * d + off + c] += ds * lc.k[j * d + off + c];
                            dk[j * d + off + c] += ds * lc.q[i * d + off + c];
                        }
                    }
                }
            }
            let mut da = {
                let (dw, db) = two_mut(grad, l.wq, d * d, l.bq, d);
                linear_backward(&lc.a, self.slice(l.wq, d * d), &dq, dw, db, n, d, d)
            };
            for (w, b, dproj) in [(l.wk, l.bk, &dk), (l.wv, l.bv, &dv)] {
                let (dw, db) = two_mut(grad, w, d * d, b, d);
                let part = linear_backward(&lc.a, self.slice(w, d * d), dproj, dw, db, n, d, d);
                da.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
            }
            let dxin = {
                let (dg, dbeta) = two_mut(grad, l.ln1_g, d, l.ln1_b, d);
                layer_norm_backward(&lc.ln1, self.slice(l.ln1_g, d), &da, dg, dbeta, n, d)
            };
            let _ = &lc.x_in;
            let _ = &lc.x_mid;
            dx = dx_mid;
            dx.iter_mut().zip(&dxin).for_each(|(a, b)| *a += b);
        }

        for (i, &t) in cache.tokens.iter().enumerate() {
            let row = &mut grad[lay.embed + t as usize * d..lay.embed + (t as usize + 1) * d];
            for j in 0..d {
                row[j] += dx[i * d + j];
            }
        }
    }
}

/// Two disjoint mutable windows `[a, a+alen)` and `[b, b+blen)` with `a < b`.
fn two_mut(buf: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + alen <= b);
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

/// Predicted quality of one sequence, in (0, 1).
pub fn forward(params: &RegressorParams, seq: &[u32]) -> Result<f64> {
    params.check_sequence(seq)?;
    Ok(Model::new(params).forward(seq)?.score)
}

/// Number of gradient shards; fixed so reductions do not depend on threads.
const GRAD_SHARDS: usize = 16;

/// Mean squared error over the batch and its exact gradient.
pub fn loss_and_grad(params: &RegressorParams, batch: &[(&[u32], f64)]) -> Result<(f64, Vec<f64>)> {
    loss_and_grad_with(params, batch, Execution::default())
}

pub fn loss_and_grad_with(
    params: &RegressorParams,
    batch: &[(&[u32], f64)],
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    for (seq, _) in batch {
        params.check_sequence(seq)?;
    }
    let model = Model::new(params);
    let parts = shards(batch.len(), batch.len().div_ceil(GRAD_SHARDS));
    let inv = 1.0 / batch.len() as f64;
    let partial = map_range(exec, parts.len(), |s| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &(seq, target) in &batch[parts[s].clone()] {
            let cache = model.forward(seq)?;
            let err = cache.score - target;
            loss += err * err;
            model.backward(&cache, 2.0 * err * inv, &mut grad);
        }
        Ok((loss, grad))
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for part in partial {
        let (l, g) = part?;
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let loss = loss * inv;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Per-sequence scores; their mean is the dataset-level score.
pub fn score_dataset(params: &RegressorParams, dataset: &TokenDataset) -> Result<Vec<f64>> {
    score_dataset_with(params, dataset, Execution::default())
}

pub fn score_dataset_with(params: &RegressorParams, dataset: &TokenDataset, exec: Execution) -> Result<Vec<f64>> {
    if dataset.codebook() != params.config.codebook || dataset.seq_len() != params.config.seq_len {
        return Err(Error::Incompatible(format!(
            "dataset (K={}, N={}) does not match regressor (K={}, N={})",
            dataset.codebook().size(),
            dataset.seq_len(),
            params.config.codebook.size(),
            params.config.seq_len
        )));
    }
    let model = Model::new(params);
    map_range(exec, dataset.len(), |i| model.forward(dataset.sequence(i)).map(|c| c.score))
        .into_iter()
        .collect()
}

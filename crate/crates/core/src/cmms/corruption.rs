//! Synthetic token-space degradations and their quality targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{plan_block, BlockShape};
use crate::error::{invalid, Error, Result};
use crate::image::{severity_of, DegradeSpec};
use crate::synth::derive_seed;
use crate::token_io::{Codebook, GridLayout, TokenSequence};

/// Upper end of the severity scale.
pub const MAX_SEVERITY: f64 = 0.3;
/// Decay rate of the quality mapping.
pub const QUALITY_DECAY: f64 = 20.0;

/// Replaces each position, with probability `p`, by a uniform draw over the
/// codebook. The draw may return the original token.
pub fn corrupt_tokens(seq: &[u32], p: f64, codebook: Codebook, seed: u64) -> Result<TokenSequence> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("corruption probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = seq
        .iter()
        .map(|&t| if rng.random_bool(p) { rng.random_range(0..codebook.size()) } else { t })
        .collect();
    Ok(TokenSequence(out))
}

/// `exp(-20 p)` for severities in [0, 0.3].
pub fn quality_target(p_eff: f64) -> Result<f64> {
    if !(0.0..=MAX_SEVERITY).contains(&p_eff) {
        return Err(invalid(format!("severity {p_eff} outside [0, {MAX_SEVERITY}]")));
    }
    Ok((-QUALITY_DECAY * p_eff).exp())
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= MAX_SEVERITY) {
        return Err(invalid(format!("swap fraction {fraction} outside (0, {MAX_SEVERITY}]")));
    }
    Ok(())
}

fn plan(layout: GridLayout, fraction: f64, rng: &mut ChaCha8Rng) -> Result<BlockShape> {
    check_fraction(fraction)?;
    let n = layout.cells() as f64;
    let area = (fraction * n).round() as usize;
    if area == 0 {
        return Err(invalid(format!("swap fraction {fraction} gives an empty block on a {layout} grid")));
    }
    let aspect = rng.random_range(0.5..=2.0);
    plan_block(area, layout.cols as usize, layout.rows as usize, aspect)
        .ok_or_else(|| invalid(format!("cannot place a block of area {area} on a {layout} grid")))
}

fn random_origin(shape: &BlockShape, layout: GridLayout, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let x = rng.random_range(0..=layout.cols as usize - shape.width);
    let y = rng.random_range(0..=layout.rows as usize - shape.height());
    (x, y)
}

fn check_len(seq: &[u32], layout: GridLayout) -> Result<()> {
    if seq.len() as u64 != layout.cells() {
        return Err(Error::Incompatible(format!(
            "sequence length {} does not match grid {layout}",
            seq.len()
        )));
    }
    Ok(())
}

/// Exchanges one block at the same grid position between `a` and `b`.
pub fn fragment_swap(
    a: &[u32],
    b: &[u32],
    layout: GridLayout,
    fraction: f64,
    seed: u64,
) -> Result<(TokenSequence, TokenSequence)> {
    check_len(a, layout)?;
    check_len(b, layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = plan(layout, fraction, &mut rng)?;
    let (x0, y0) = random_origin(&shape, layout, &mut rng);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    let cols = layout.cols as usize;
    for (dx, dy) in shape.cells() {
        let i = (y0 + dy) * cols + x0 + dx;
        std::mem::swap(&mut a[i], &mut b[i]);
    }
    Ok((TokenSequence(a), TokenSequence(b)))
}

const PLACEMENT_TRIES: usize = 16;

/// Exchanges two distant, non-overlapping blocks within one sequence.
///
/// Block centers should be at least `max(R, C) / 2` apart (Chebyshev); after
/// 16 random tries the most separated non-overlapping candidate is used, and
/// if none was found the best placement is searched exhaustively. If the
/// sampled shape cannot appear twice without overlap, it is re-planned to fit
/// in half of the grid.
pub fn fragment_swap_within(seq: &[u32], layout: GridLayout, fraction: f64, seed: u64) -> Result<TokenSequence> {
    check_len(seq, layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = plan(layout, fraction, &mut rng)?;
    let (cols, rows) = (layout.cols as usize, layout.rows as usize);
    let area = shape.area();
    let aspect = shape.width as f64 / shape.height() as f64;
    let candidates = [
        Some(shape),
        plan_block(area, cols / 2, rows, aspect),
        plan_block(area, cols, rows / 2, aspect),
    ];
    for shape in candidates.into_iter().flatten() {
        if let Some((p, q)) = place_pair(&shape, layout, &mut rng) {
            let mut out = seq.to_vec();
            for (dx, dy) in shape.cells() {
                let i = (p.1 + dy) * cols + p.0 + dx;
                let j = (q.1 + dy) * cols + q.0 + dx;
                out.swap(i, j);
            }
            return Ok(TokenSequence(out));
        }
    }
    Err(invalid(format!("two blocks of fraction {fraction} do not fit on a {layout} grid")))
}

type Origin = (usize, usize);

fn place_pair(shape: &BlockShape, layout: GridLayout, rng: &mut ChaCha8Rng) -> Option<(Origin, Origin)> {
    let (w, h) = (shape.width, shape.height());
    let (cols, rows) = (layout.cols as usize, layout.rows as usize);
    let min_sep = rows.max(cols) as f64 / 2.0;
    // Equal-size bounding boxes are disjoint iff their origins differ by at
    // least the box size along some axis.
    let disjoint = |p: Origin, q: Origin| p.0.abs_diff(q.0) >= w || p.1.abs_diff(q.1) >= h;
    let separation = |p: Origin, q: Origin| p.0.abs_diff(q.0).max(p.1.abs_diff(q.1)) as f64;

    let mut best: Option<(Origin, Origin, f64)> = None;
    for _ in 0..PLACEMENT_TRIES {
        let p = random_origin(shape, layout, rng);
        let q = random_origin(shape, layout, rng);
        if !disjoint(p, q) {
            continue;
        }
        let s = separation(p, q);
        if best.is_none_or(|b| s > b.2) {
            best = Some((p, q, s));
        }
        if s >= min_sep {
            break;
        }
    }
    if best.is_none() {
        for py in 0..=rows - h {
            for px in 0..=cols - w {
                for qy in 0..=rows - h {
                    for qx in 0..=cols - w {
                        let (p, q) = ((px, py), (qx, qy));
                        if disjoint(p, q) && best.is_none_or(|b| separation(p, q) > b.2) {
                            best = Some((p, q, separation(p, q)));
                        }
                    }
                }
            }
        }
    }
    best.map(|(p, q, _)| (p, q))
}

/// One sample of the degradation family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionSpec {
    pub p_uniform: f64,
    pub swap_fraction: f64,
    /// Pixel degradation applied before tokenization; only its severity is
    /// used here.
    pub pixel: Option<DegradeSpec>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn clean() -> Self {
        CorruptionSpec { p_uniform: 0.0, swap_fraction: 0.0, pixel: None, seed: 0 }
    }

    /// Combined severity `min(0.3, p_uniform + swap_fraction + pixel severity)`.
    pub fn effective_severity(&self) -> Result<f64> {
        if !(0.0..=MAX_SEVERITY).contains(&self.p_uniform) {
            return Err(invalid(format!("p_uniform {} outside [0, 0.3]", self.p_uniform)));
        }
        if !(0.0..=MAX_SEVERITY).contains(&self.swap_fraction) {
            return Err(invalid(format!("swap_fraction {} outside [0, 0.3]", self.swap_fraction)));
        }
        let pixel = self.pixel.as_ref().map(severity_of).transpose()?.unwrap_or(0.0);
        Ok((self.p_uniform + self.swap_fraction + pixel).min(MAX_SEVERITY))
    }
}

/// Applies uniform corruption, then the optional fragment swap (with
/// `partner` when given, within the sequence otherwise), and returns the
/// degraded sequence with its quality target.
///
/// Without a layout the sequence is treated as a `1 x N` grid.
pub fn corrupt_sample(
    seq: &[u32],
    spec: &CorruptionSpec,
    partner: Option<&[u32]>,
    codebook: Codebook,
    layout: Option<GridLayout>,
) -> Result<(TokenSequence, f64)> {
    let p_eff = spec.effective_severity()?;
    let mut out = corrupt_tokens(seq, spec.p_uniform, codebook, derive_seed(spec.seed, 0))?;
    if spec.swap_fraction > 0.0 {
        let layout = match layout {
            Some(l) => l,
            None => GridLayout::new(1, seq.len() as u32)?,
        };
        let swap_seed = derive_seed(spec.seed, 1);
        out = match partner {
            Some(b) => fragment_swap(out.ids(), b, layout, spec.swap_fraction, swap_seed)?.0,
            None => fragment_swap_within(out.ids(), layout, spec.swap_fraction, swap_seed)?,
        };
    }
    Ok((out, quality_target(p_eff)?))
}

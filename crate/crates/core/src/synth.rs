//! Seeded synthetic corpora: structured token grids and natural-looking images.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::Image;
use crate::token_io::{Codebook, GridLayout, TokenDataset};

/// Parameters of the structured token-grid generator.
///
/// Each grid is a Voronoi partition into a few regions. A region has a base
/// token drawn from a Zipf law over the first `vocab_fraction * K` ids; each
/// cell keeps the base token, or with probability `detail` one of its two
/// successors, which gives texture inside regions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneConfig {
    pub min_regions: usize,
    pub max_regions: usize,
    pub zipf_exponent: f64,
    pub vocab_fraction: f64,
    pub detail: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { min_regions: 2, max_regions: 5, zipf_exponent: 1.1, vocab_fraction: 0.25, detail: 0.25 }
    }
}

pub fn structured_tokens(
    n: usize,
    codebook: Codebook,
    layout: GridLayout,
    config: &SceneConfig,
    seed: u64,
) -> Result<TokenDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ((codebook.len() as f64 * config.vocab_fraction) as usize).clamp(2, codebook.len());
    let zipf = WeightedIndex::new((0..vocab).map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent)))
        .expect("positive weights");
    let (rows, cols) = (layout.rows as usize, layout.cols as usize);
    let mut ds = TokenDataset::new(codebook, rows * cols, Some(layout))?;
    let mut seq = vec![0u32; rows * cols];
    for _ in 0..n {
        let regions = rng.random_range(config.min_regions..=config.max_regions);
        let centers: Vec<(f64, f64, u32)> = (0..regions)
            .map(|_| {
                let y = rng.random_range(0.0..rows as f64);
                let x = rng.random_range(0.0..cols as f64);
                (y, x, zipf.sample(&mut rng) as u32)
            })
            .collect();
        for r in 0..rows {
            for c in 0..cols {
                let (_, _, base) = centers
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 - r as f64).powi(2) + (a.1 - c as f64).powi(2);
                        let db = (b.0 - r as f64).powi(2) + (b.1 - c as f64).powi(2);
                        da.total_cmp(&db)
                    })
                    .copied()
                    .unwrap();
                let token = if rng.random_bool(config.detail) {
                    (base + rng.random_range(1..=2)) % vocab as u32
                } else {
                    base
                };
                seq[r * cols + c] = token;
            }
        }
        ds.push(&seq)?;
    }
    Ok(ds)
}

/// Each id drawn i.i.d. from `probs`.
pub fn iid_tokens(
    n: usize,
    probs: &[f64],
    seq_len: usize,
    layout: Option<GridLayout>,
    seed: u64,
) -> Result<TokenDataset> {
    let codebook = Codebook::new(probs.len() as u32)?;
    let dist = WeightedIndex::new(probs).map_err(|e| crate::error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<u32> = (0..n * seq_len).map(|_| dist.sample(&mut rng) as u32).collect();
    TokenDataset::from_flat(codebook, seq_len, layout, ids)
}

/// A smooth two-color gradient with a few flat and striped shapes on top.
pub fn natural_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let color = |rng: &mut ChaCha8Rng| [rng.random::<u8>() as f64, rng.random::<u8>() as f64, rng.random::<u8>() as f64];
    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ux, uy) = (angle.cos(), angle.sin());
    let span = (width as f64).hypot(height as f64);
    let mut buf = vec![0.0f64; 3 * width * height];
    for y in 0..height {
        for x in 0..width {
            let t = ((x as f64 - width as f64 / 2.0) * ux + (y as f64 - height as f64 / 2.0) * uy) / span + 0.5;
            for c in 0..3 {
                buf[3 * (y * width + x) + c] = c0[c] * (1.0 - t) + c1[c] * t;
            }
        }
    }
    let shapes = rng.random_range(3..=7);
    for _ in 0..shapes {
        let fill = color(&mut rng);
        let alt = color(&mut rng);
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(0.08..0.4) * width as f64;
        let ry = rng.random_range(0.08..0.4) * height as f64;
        let ellipse = rng.random_bool(0.5);
        let stripes = rng.random_bool(0.5);
        let period = rng.random_range(2.0..6.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if ellipse { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if !inside {
                    continue;
                }
                let w = if stripes {
                    0.5 + 0.5 * ((x as f64 + y as f64) * std::f64::consts::TAU / period + phase).sin()
                } else {
                    1.0
                };
                for c in 0..3 {
                    buf[3 * (y * width + x) + c] = fill[c] * w + alt[c] * (1.0 - w);
                }
            }
        }
    }
    let pixels = buf.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect();
    Image::new(width, height, pixels).expect("valid dimensions")
}

pub fn natural_images(n: usize, width: usize, height: usize, seed: u64) -> Vec<Image> {
    (0..n).map(|i| natural_image(width, height, derive_seed(seed, i as u64))).collect()
}

/// Mixes a base seed with an index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let k = Codebook::new(64).unwrap();
        let g = GridLayout::new(4, 4).unwrap();
        let a = structured_tokens(10, k, g, &SceneConfig::default(), 3).unwrap();
        assert_eq!(a, structured_tokens(10, k, g, &SceneConfig::default(), 3).unwrap());
        assert_ne!(a, structured_tokens(10, k, g, &SceneConfig::default(), 4).unwrap());
        assert!(a.flat_ids().iter().all(|&t| t < 16));
        assert_eq!(natural_image(16, 8, 1), natural_image(16, 8, 1));
    }
}

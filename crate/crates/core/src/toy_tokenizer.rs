//! Deterministic patch-mean tokenizer over an RGB lattice palette.
//!
//! A stand-in for a learned image tokenizer: the image is split into an
//! R x C grid of equal patches and each patch is mapped to the palette entry
//! nearest its mean color.

use crate::error::{invalid, Result};
use crate::exec::{map_slice, Execution};
use crate::image::Image;
use crate::token_io::{Codebook, GridLayout, TokenDataset, TokenSequence};

/// `K` RGB centroids: the first `K` points, in lexicographic order, of a
/// cubic lattice with `side = ceil(K^(1/3))` levels per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaletteCodebook {
    entries: Vec<[u8; 3]>,
    levels: Vec<u8>,
}

pub fn build_palette(codebook: Codebook) -> PaletteCodebook {
    let k = codebook.len();
    let mut side = 1;
    while side * side * side < k {
        side += 1;
    }
    let levels: Vec<u8> = (0..side)
        .map(|i| ((i * 255) as f64 / (side - 1) as f64).round() as u8)
        .collect();
    let mut entries = Vec::with_capacity(k);
    'outer: for &r in &levels {
        for &g in &levels {
            for &b in &levels {
                if entries.len() == k {
                    break 'outer;
                }
                entries.push([r, g, b]);
            }
        }
    }
    PaletteCodebook { entries, levels }
}

impl PaletteCodebook {
    pub fn entries(&self) -> &[[u8; 3]] {
        &self.entries
    }

    pub fn codebook(&self) -> Codebook {
        Codebook::new(self.entries.len() as u32).expect("palette has at least 2 entries")
    }

    /// Index of the entry nearest `color` (squared Euclidean), lowest index on ties.
    pub fn nearest(&self, color: [f64; 3]) -> u32 {
        // Per-channel nearest level gives the full-lattice optimum; lower
        // levels win ties, which is also the lowest lexicographic index.
        let side = self.levels.len();
        let mut index = 0usize;
        for &c in &color {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &l) in self.levels.iter().enumerate() {
                let d = (c - l as f64).powi(2);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            index = index * side + best;
        }
        if index < self.entries.len() {
            return index as u32;
        }
        // Truncated lattice: the optimum was cut off, search exhaustively.
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let d: f64 = (0..3).map(|c| (color[c] - e[c] as f64).powi(2)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best as u32
    }
}

/// Tokenizes one image; tokens are emitted row-major over the grid.
pub fn tokenize(img: &Image, layout: GridLayout, palette: &PaletteCodebook) -> Result<TokenSequence> {
    let (rows, cols) = (layout.rows as usize, layout.cols as usize);
    if !img.width().is_multiple_of(cols) || !img.height().is_multiple_of(rows) {
        return Err(invalid(format!(
            "image {}x{} is not divisible by grid {layout}",
            img.width(),
            img.height()
        )));
    }
    let (pw, ph) = (img.width() / cols, img.height() / rows);
    let inv = 1.0 / (pw * ph) as f64;
    let mut ids = Vec::with_capacity(rows * cols);
    for gy in 0..rows {
        for gx in 0..cols {
            let mut sum = [0u64; 3];
            for y in gy * ph..(gy + 1) * ph {
                for x in gx * pw..(gx + 1) * pw {
                    let p = img.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += p[c] as u64;
                    }
                }
            }
            let mean = [sum[0] as f64 * inv, sum[1] as f64 * inv, sum[2] as f64 * inv];
            ids.push(palette.nearest(mean));
        }
    }
    Ok(TokenSequence(ids))
}

/// Tokenizes a batch of images into one dataset, preserving order.
pub fn tokenize_all(
    images: &[Image],
    layout: GridLayout,
    palette: &PaletteCodebook,
    exec: Execution,
) -> Result<TokenDataset> {
    let seqs = map_slice(exec, images, |img| tokenize(img, layout, palette));
    let mut ds = TokenDataset::new(palette.codebook(), layout.cells() as usize, Some(layout))?;
    for s in seqs {
        ds.push(s?.ids())?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: u32) -> Codebook {
        Codebook::new(n).unwrap()
    }

    #[test]
    fn palette_shapes() {
        let p8 = build_palette(k(8));
        let corners: Vec<[u8; 3]> = (0..8)
            .map(|i| [(i >> 2 & 1) * 255, (i >> 1 & 1) * 255, (i & 1) * 255].map(|v| v as u8))
            .collect();
        assert_eq!(p8.entries(), &corners[..]);
        assert_eq!(build_palette(k(2)).entries(), &[[0, 0, 0], [0, 0, 255]]);
        let p = build_palette(k(4096));
        let mut seen = std::collections::HashSet::new();
        assert!(p.entries().iter().all(|e| seen.insert(*e)));
        assert_eq!(p.entries().len(), 4096);
    }

    #[test]
    fn nearest_matches_exhaustive_search() {
        for kk in [2, 5, 8, 30, 64, 100] {
            let p = build_palette(k(kk));
            for r in (0..=255).step_by(17) {
                for g in (0..=255).step_by(51) {
                    for b in (0..=255).step_by(85) {
                        let c = [r as f64 + 0.3, g as f64, b as f64 - 0.2];
                        let brute = p
                            .entries()
                            .iter()
                            .enumerate()
                            .map(|(i, e)| (i, (0..3).map(|j| (c[j] - e[j] as f64).powi(2)).sum::<f64>()))
                            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                            .0;
                        assert_eq!(p.nearest(c), brute as u32, "K={kk} color={c:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn tokenizes_simple_images() {
        let p = build_palette(k(8));
        let black = Image::filled(64, 64, [0, 0, 0]).unwrap();
        let grid = GridLayout::new(8, 8).unwrap();
        assert_eq!(tokenize(&black, grid, &p).unwrap().ids(), &[0u32; 64][..]);

        let mut halves = Image::filled(4, 2, [0, 0, 0]).unwrap();
        for y in 0..2 {
            for x in 2..4 {
                halves.set_pixel(x, y, [255, 255, 255]);
            }
        }
        let seq = tokenize(&halves, GridLayout::new(1, 2).unwrap(), &p).unwrap();
        assert_eq!(seq.ids(), &[0, 7]);
        assert!(tokenize(&halves, GridLayout::new(1, 3).unwrap(), &p).is_err());
    }

    #[test]
    fn shift_by_one_patch_shifts_tokens() {
        let p = build_palette(k(64));
        let grid = GridLayout::new(4, 8).unwrap();
        let img = crate::synth::natural_image(64, 32, 4);
        let mut shifted = Image::filled(64, 32, [0, 0, 0]).unwrap();
        for y in 0..32 {
            for x in 8..64 {
                shifted.set_pixel(x, y, img.pixel(x - 8, y));
            }
        }
        let a = tokenize(&img, grid, &p).unwrap();
        let b = tokenize(&shifted, grid, &p).unwrap();
        for r in 0..4 {
            for c in 1..8 {
                assert_eq!(b.ids()[r * 8 + c], a.ids()[r * 8 + c - 1]);
            }
        }
        assert_eq!(a, tokenize(&img, grid, &p).unwrap());
    }
}

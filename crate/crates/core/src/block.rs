//! Contiguous block shapes with an exact cell count.

/// `full_rows` rows of `width` cells, plus `extra` (< `width`) cells starting
/// the next row. When `extra == 0` this is an ordinary rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct BlockShape {
    pub width: usize,
    pub full_rows: usize,
    pub extra: usize,
}

impl BlockShape {
    pub fn area(&self) -> usize {
        self.width * self.full_rows + self.extra
    }

    pub fn height(&self) -> usize {
        self.full_rows + usize::from(self.extra > 0)
    }

    /// Cell offsets `(dx, dy)` relative to the top-left corner.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let full = (0..self.full_rows).flat_map(move |dy| (0..self.width).map(move |dx| (dx, dy)));
        let extra = (0..self.extra).map(move |dx| (dx, self.full_rows));
        full.chain(extra)
    }
}

/// Plans a block of exactly `area` cells inside a `max_w` x `max_h` canvas,
/// with width/height as close as possible to `aspect` (in log ratio).
///
/// Exact rectangles (divisor pairs of `area`) are preferred. When none fits,
/// the block is the widest-legal near-rectangle: full rows plus a partial row.
pub(crate) fn plan_block(area: usize, max_w: usize, max_h: usize, aspect: f64) -> Option<BlockShape> {
    if area == 0 || max_w == 0 || max_h == 0 || area > max_w * max_h {
        return None;
    }
    let target = aspect.ln();
    let mut best: Option<(f64, BlockShape)> = None;
    for w in 1..=max_w.min(area) {
        if !area.is_multiple_of(w) || area / w > max_h {
            continue;
        }
        let h = area / w;
        let score = ((w as f64 / h as f64).ln() - target).abs();
        // ties (within rounding) go to the wider shape
        if best.as_ref().is_none_or(|(s, _)| score <= *s + 1e-12) {
            best = Some((score, BlockShape { width: w, full_rows: h, extra: 0 }));
        }
    }
    if let Some((_, shape)) = best {
        return Some(shape);
    }
    let ideal = ((area as f64 * aspect).sqrt().round() as usize).clamp(1, max_w);
    // Smallest width whose near-rectangle still fits vertically.
    let min_w = area.div_ceil(max_h);
    let width = ideal.max(min_w).min(max_w);
    let shape = BlockShape { width, full_rows: area / width, extra: area % width };
    (shape.height() <= max_h).then_some(shape)
}

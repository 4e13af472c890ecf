//! Binary pixel regions.

use crate::error::{Error, Result};
use crate::textfmt::Lines;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
}

impl RegionMask {
    /// `mask W H` followed by one row of `0`/`1` characters per line.
    pub(crate) fn write(&self, out: &mut String) {
        out.push_str(&format!("mask {} {}\n", self.width, self.height));
        for row in self.inside.chunks(self.width.max(1)) {
            out.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
            out.push('\n');
        }
    }

    pub(crate) fn read(lines: &mut Lines<'_>) -> Result<Self> {
        let toks = lines.expect("mask")?;
        let width: usize = lines.parse_tok(toks.first(), "mask width")?;
        let height: usize = lines.parse_tok(toks.get(1), "mask height")?;
        let mut inside = Vec::with_capacity(width * height);
        for _ in 0..height {
            let row = lines.next_line()?;
            if row.len() != width || row.bytes().any(|b| b != b'0' && b != b'1') {
                return Err(lines.err(format!("mask row must be {width} characters of 0/1")));
            }
            inside.extend(row.bytes().map(|b| b == b'1'));
        }
        Ok(RegionMask { width, height, inside })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        RegionMask { width, height, inside: vec![false; width * height] }
    }

    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} entries, got {}",
                width * height,
                inside.len()
            )));
        }
        Ok(RegionMask { width, height, inside })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut inside = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                inside.push(f(x, y));
            }
        }
        RegionMask { width, height, inside }
    }

    /// Axis-aligned rectangle `[x0, x0 + w) × [y0, y0 + h)`, clipped to the canvas.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self::from_fn(width, height, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    #[inline]
    pub fn contains_idx(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.inside[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.inside.iter().any(|&b| b)
    }

    /// Linear indices of member pixels.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Member pixel coordinates `(x, y)`.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.indices().map(move |i| (i % w, i / w))
    }

    /// Mean member coordinate `(x_c, y_c)`.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Inclusive bounding box `(x_min, y_min, x_max, y_max)`.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.pixels() {
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
            });
        }
        bb
    }

    /// Member pixels with a 4-neighbour outside the region or on the canvas edge.
    pub fn boundary_pixels(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.width, self.height);
        self.pixels()
            .filter(|&(x, y)| {
                x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == h
                    || !self.contains(x - 1, y)
                    || !self.contains(x + 1, y)
                    || !self.contains(x, y - 1)
                    || !self.contains(x, y + 1)
            })
            .collect()
    }

    /// Non-member pixels 4-adjacent to the region: the one-pixel outer ring.
    pub fn outer_ring(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.width, self.height);
        let mut ring = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if self.contains(x, y) {
                    continue;
                }
                let touches = (x > 0 && self.contains(x - 1, y))
                    || (x + 1 < w && self.contains(x + 1, y))
                    || (y > 0 && self.contains(x, y - 1))
                    || (y + 1 < h && self.contains(x, y + 1));
                if touches {
                    ring.push((x, y));
                }
            }
        }
        ring
    }

    pub fn intersection_area(&self, other: &RegionMask) -> usize {
        self.inside.iter().zip(&other.inside).filter(|(a, b)| **a && **b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_stats() {
        let m = RegionMask::rect(10, 8, 2, 3, 4, 2);
        assert_eq!(m.area(), 8);
        assert_eq!(m.centroid(), Some((3.5, 3.5)));
        assert_eq!(m.bounding_box(), Some((2, 3, 5, 4)));
        assert_eq!(m.boundary_pixels().len(), 8);
        assert_eq!(m.outer_ring().len(), 12);
        assert!(RegionMask::empty(3, 3).centroid().is_none());
    }

    #[test]
    fn boundary_of_filled_square_is_its_perimeter() {
        let m = RegionMask::rect(20, 20, 5, 5, 10, 10);
        assert_eq!(m.boundary_pixels().len(), 36);
    }
}

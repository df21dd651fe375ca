use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// What a mask covers: the whole image or one labelled glyph block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskScope {
    ImageLevel,
    Block(String),
}

/// Row-major binary mask. Every cell is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
    scope: MaskScope,
}

impl GlyphMask {
    pub fn empty(height: usize, width: usize, scope: MaskScope) -> Self {
        Self {
            height,
            width,
            bits: vec![0; height * width],
            scope,
        }
    }

    pub fn full(height: usize, width: usize, scope: MaskScope) -> Self {
        Self {
            height,
            width,
            bits: vec![1; height * width],
            scope,
        }
    }

    /// Builds a mask from row-major values; any nonzero value is foreground.
    pub fn from_values(
        height: usize,
        width: usize,
        values: &[u8],
        scope: MaskScope,
    ) -> Result<Self> {
        if values.len() != height * width {
            return Err(CoreError::InvalidSize { width, height });
        }
        Ok(Self {
            height,
            width,
            bits: values.iter().map(|&v| u8::from(v != 0)).collect(),
            scope,
        })
    }

    /// Thresholds a row-major probability map: `p >= threshold` is foreground.
    pub fn from_probabilities(
        height: usize,
        width: usize,
        probs: &[f32],
        threshold: f32,
        scope: MaskScope,
    ) -> Result<Self> {
        if probs.len() != height * width {
            return Err(CoreError::InvalidSize { width, height });
        }
        Ok(Self {
            height,
            width,
            bits: probs.iter().map(|&p| u8::from(p >= threshold)).collect(),
            scope,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn scope(&self) -> &MaskScope {
        &self.scope
    }

    pub fn with_scope(mut self, scope: MaskScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.bits[row * self.width + col] = u8::from(on);
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    /// Foreground pixels as `(row, col)` in row-major order.
    pub fn foreground(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Pixelwise OR in place.
    pub fn union_with(&mut self, other: &GlyphMask) -> Result<()> {
        self.check_shape(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn check_shape(&self, other: &GlyphMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(CoreError::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Inclusive pixel bounds `(min_row, min_col, max_row, max_col)` of the
    /// foreground, or `None` for an empty mask.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for (i, &b) in self.bits.iter().enumerate() {
            if b == 0 {
                continue;
            }
            let (r, c) = (i / self.width, i % self.width);
            out = Some(match out {
                None => (r, c, r, c),
                Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
            });
        }
        out
    }

    /// Nearest-neighbour resample to `height x width`. Output pixel `i`
    /// reads source pixel `floor((i + 0.5) * src / dst)`; equal sizes copy.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Result<GlyphMask> {
        if height == 0 || width == 0 || self.height == 0 || self.width == 0 {
            return Err(CoreError::EmptyInput);
        }
        if (height, width) == self.shape() {
            return Ok(self.clone());
        }
        let rows: Vec<usize> = (0..height)
            .map(|i| nearest_source(i, self.height, height))
            .collect();
        let cols: Vec<usize> = (0..width)
            .map(|j| nearest_source(j, self.width, width))
            .collect();
        let mut bits = Vec::with_capacity(height * width);
        for &r in &rows {
            let src = &self.bits[r * self.width..(r + 1) * self.width];
            bits.extend(cols.iter().map(|&c| src[c]));
        }
        Ok(GlyphMask {
            height,
            width,
            bits,
            scope: self.scope.clone(),
        })
    }
}

fn nearest_source(i: usize, src: usize, dst: usize) -> usize {
    // (2i + 1) * src / (2 dst), in integers
    (((2 * i + 1) * src) / (2 * dst)).min(src - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_half_survives_halving() {
        let mut m = GlyphMask::empty(512, 512, MaskScope::ImageLevel);
        for r in 0..512 {
            for c in 0..256 {
                m.set(r, c, true);
            }
        }
        let s = m.resize_nearest(256, 256).unwrap();
        for r in 0..256 {
            for c in 0..256 {
                assert_eq!(s.get(r, c), c < 128);
            }
        }
    }

    #[test]
    fn same_size_is_identity() {
        let vals: Vec<u8> = (0..64u32).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let m = GlyphMask::from_values(8, 8, &vals, MaskScope::ImageLevel).unwrap();
        assert_eq!(m.resize_nearest(8, 8).unwrap(), m);
    }

    #[test]
    fn bounds_and_union() {
        let mut a = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        assert_eq!(a.bounds(), None);
        a.set(1, 2, true);
        let mut b = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        b.set(3, 0, true);
        a.union_with(&b).unwrap();
        assert_eq!(a.count(), 2);
        assert_eq!(a.bounds(), Some((1, 0, 3, 2)));
        let c = GlyphMask::empty(4, 5, MaskScope::ImageLevel);
        assert!(a.union_with(&c).is_err());
    }

    #[test]
    fn values_are_binarized() {
        let m = GlyphMask::from_values(1, 3, &[0, 255, 7], MaskScope::ImageLevel).unwrap();
        assert_eq!(m.bits(), &[0, 1, 1]);
    }
}

//! Overlap metrics on binary masks.
//!
//! Both metrics are 1.0 when prediction and ground truth are both empty and
//! 0.0 when exactly one of them is.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::GlyphMask;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricPair {
    pub iou: f64,
    pub dice: f64,
}

/// `(|P ∩ G|, |P|, |G|)`
fn overlap(pred: &GlyphMask, gt: &GlyphMask) -> Result<(usize, usize, usize)> {
    pred.check_shape(gt)?;
    let mut inter = 0;
    let mut p = 0;
    let mut g = 0;
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        let (a, b) = (a != 0, b != 0);
        inter += usize::from(a && b);
        p += usize::from(a);
        g += usize::from(b);
    }
    Ok((inter, p, g))
}

pub fn iou(pred: &GlyphMask, gt: &GlyphMask) -> Result<f64> {
    let (inter, p, g) = overlap(pred, gt)?;
    let union = p + g - inter;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn dice_score(pred: &GlyphMask, gt: &GlyphMask) -> Result<f64> {
    let (inter, p, g) = overlap(pred, gt)?;
    Ok(if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    })
}

impl MetricPair {
    pub fn score(pred: &GlyphMask, gt: &GlyphMask) -> Result<Self> {
        let (inter, p, g) = overlap(pred, gt)?;
        if p + g == 0 {
            return Ok(Self { iou: 1.0, dice: 1.0 });
        }
        Ok(Self {
            iou: inter as f64 / (p + g - inter) as f64,
            dice: 2.0 * inter as f64 / (p + g) as f64,
        })
    }

    pub const ZERO: MetricPair = MetricPair { iou: 0.0, dice: 0.0 };
}

/// Mean and population standard deviation of a set of metric pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: MetricPair,
    pub std: MetricPair,
}

impl MetricSummary {
    pub fn of(pairs: &[MetricPair]) -> Self {
        if pairs.is_empty() {
            return Self::default();
        }
        let n = pairs.len() as f64;
        let mean = MetricPair {
            iou: pairs.iter().map(|p| p.iou).sum::<f64>() / n,
            dice: pairs.iter().map(|p| p.dice).sum::<f64>() / n,
        };
        let var = |f: fn(&MetricPair) -> f64, m: f64| {
            pairs.iter().map(|p| (f(p) - m) * (f(p) - m)).sum::<f64>() / n
        };
        let std = MetricPair {
            iou: libm::sqrt(var(|p| p.iou, mean.iou)),
            dice: libm::sqrt(var(|p| p.dice, mean.dice)),
        };
        Self { mean, std }
    }
}

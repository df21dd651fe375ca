//! Pixelwise losses on probability tensors.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[CE_EPS, 1 - CE_EPS]` before taking logs.
pub const CE_EPS: f64 = 1e-7;
/// Additive smoothing of the soft Dice ratio.
pub const DICE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights need alpha, beta >= 0 and alpha + beta > 0, got ({}, {})",
                self.alpha, self.beta
            )))
        }
    }
}

fn check_shapes(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.dims() != target.dims() {
        return Err(Error::Core(glyphseg_core::CoreError::ShapeMismatch {
            left: (pred.elem_count(), 0),
            right: (target.elem_count(), 0),
        }));
    }
    Ok(())
}

/// Mean binary cross-entropy over all elements.
pub fn cross_entropy_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_shapes(pred, target)?;
    let p = pred.clamp(CE_EPS, 1.0 - CE_EPS)?;
    let pos = (target * p.log()?)?;
    let neg = (target.affine(-1.0, 1.0)? * p.affine(-1.0, 1.0)?.log()?)?;
    Ok((pos + neg)?.mean_all()?.neg()?)
}

/// Soft Dice loss with sums over all elements.
pub fn dice_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_shapes(pred, target)?;
    let inter = (pred * target)?.sum_all()?;
    let denom = ((pred.sum_all()? + target.sum_all()?)? + DICE_EPS)?;
    let ratio = (inter.affine(2.0, DICE_EPS)? / denom)?;
    Ok(ratio.affine(-1.0, 1.0)?)
}

pub fn combined_loss(pred: &Tensor, target: &Tensor, w: LossWeights) -> Result<Tensor> {
    let ce = cross_entropy_loss(pred, target)?;
    let dice = dice_loss(pred, target)?;
    Ok((ce.affine(w.alpha, 0.0)? + dice.affine(w.beta, 0.0)?)?)
}

/// Combined loss of each `[B, ...]` sample, averaged over the batch.
pub fn batch_combined_loss(pred: &Tensor, target: &Tensor, w: LossWeights) -> Result<Tensor> {
    check_shapes(pred, target)?;
    let b = pred.dim(0)?;
    let losses = (0..b)
        .map(|i| combined_loss(&pred.get(i)?, &target.get(i)?, w))
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::stack(&losses, 0)?.sum_all()? / b as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn t(v: &[f32], shape: (usize, usize)) -> Tensor {
        Tensor::from_slice(v, shape, &Device::Cpu).unwrap()
    }

    fn scalar(x: Tensor) -> f64 {
        x.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn uniform_half_cross_entropy_is_ln2() {
        let target: Vec<f32> = (0..16).map(|i| (i % 3 == 0) as u8 as f32).collect();
        let ce = scalar(cross_entropy_loss(&t(&[0.5; 16], (4, 4)), &t(&target, (4, 4))).unwrap());
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let target: Vec<f32> = (0..16).map(|i| (i % 2) as f32).collect();
        let tt = t(&target, (4, 4));
        assert!(scalar(cross_entropy_loss(&tt, &tt).unwrap()) <= 2e-7);
        assert!(scalar(dice_loss(&tt, &tt).unwrap()).abs() <= 1e-6);
        let inv: Vec<f32> = target.iter().map(|v| 1.0 - v).collect();
        assert!((scalar(dice_loss(&t(&inv, (4, 4)), &tt).unwrap()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_target_dice_and_combined() {
        let target: Vec<f32> = (0..16).map(|i| (i < 8) as u8 as f32).collect();
        let p = t(&[0.5; 16], (4, 4));
        let tt = t(&target, (4, 4));
        assert!((scalar(dice_loss(&p, &tt).unwrap()) - 0.5).abs() < 1e-6);
        let c = scalar(combined_loss(&p, &tt, LossWeights::default()).unwrap());
        assert!((c - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-6);
        let ce_only = LossWeights { alpha: 1.0, beta: 0.0 };
        let dice_only = LossWeights { alpha: 0.0, beta: 1.0 };
        assert!((scalar(combined_loss(&p, &tt, ce_only).unwrap()) - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((scalar(combined_loss(&p, &tt, dice_only).unwrap()) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_and_weights() {
        assert!(cross_entropy_loss(&t(&[0.5; 4], (2, 2)), &t(&[0.0; 4], (1, 4))).is_err());
        assert!(LossWeights { alpha: 0.0, beta: 0.0 }.validate().is_err());
        assert!(LossWeights { alpha: -1.0, beta: 2.0 }.validate().is_err());
    }

    #[test]
    fn batch_loss_averages_samples() {
        let dev = Device::Cpu;
        let p = Tensor::from_slice(&[0.5f32, 0.5, 0.9, 0.1], (2, 1, 1, 2), &dev).unwrap();
        let tt = Tensor::from_slice(&[1f32, 0.0, 1.0, 0.0], (2, 1, 1, 2), &dev).unwrap();
        let w = LossWeights::default();
        let a = scalar(combined_loss(&p.get(0).unwrap(), &tt.get(0).unwrap(), w).unwrap());
        let b = scalar(combined_loss(&p.get(1).unwrap(), &tt.get(1).unwrap(), w).unwrap());
        let both = scalar(batch_combined_loss(&p, &tt, w).unwrap());
        assert!((both - (a + b) / 2.0).abs() < 1e-6);
    }
}

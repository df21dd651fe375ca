//! Central finite-difference check of decoder gradients.

use candle_core::{DType, Tensor};
use glyphseg_core::{seed, PromptSet};
use rand::Rng;

use super::loss::{combined_loss, LossWeights};
use crate::error::{Error, Result};
use crate::modelzoo::{Encoded, PromptableSegmenter};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientSample {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

fn loss_value(
    model: &PromptableSegmenter,
    encoded: &Encoded,
    prompts: &PromptSet,
    target: &Tensor,
    w: LossWeights,
) -> Result<Tensor> {
    let probs = candle_nn::ops::sigmoid(&model.decode_logits(encoded, prompts)?)?;
    combined_loss(&probs, target, w)
}

fn to_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Compares analytic and central-difference gradients of the combined loss
/// for `per_parameter` seeded entries of each named decoder parameter.
///
/// Each named parameter is first multiplied by `scale`; `h` is the
/// perturbation. The model should carry an `F64` decoder.
#[allow(clippy::too_many_arguments)]
pub fn decoder_gradient_check(
    model: &PromptableSegmenter,
    encoded: &Encoded,
    prompts: &PromptSet,
    target: &Tensor,
    weights: LossWeights,
    parameters: &[&str],
    per_parameter: usize,
    scale: f64,
    h: f64,
    check_seed: u64,
) -> Result<Vec<GradientSample>> {
    let target = target.to_dtype(model.dtype())?;
    let vars = model.decoder_vars().data().lock().expect("varmap lock poisoned").clone();
    let mut out = Vec::new();
    for &name in parameters {
        let var = vars
            .get(name)
            .ok_or_else(|| Error::Config(format!("decoder has no parameter `{name}`")))?;
        let scaled = (var.as_tensor() * scale)?;
        var.set(&scaled)?;
        let shape = scaled.shape().clone();
        let base: Vec<f64> = scaled.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;

        let loss = loss_value(model, encoded, prompts, &target, weights)?;
        let grads = loss.backward()?;
        let grad: Vec<f64> = grads
            .get(var.as_tensor())
            .ok_or_else(|| Error::Config(format!("no gradient reached `{name}`")))?
            .flatten_all()?
            .to_dtype(DType::F64)?
            .to_vec1()?;

        let mut rng = seed::rng(seed::item_seed(check_seed, name, "gradcheck", 0));
        for _ in 0..per_parameter {
            let index = rng.random_range(0..base.len());
            let eval_at = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[index] += delta;
                var.set(&Tensor::from_vec(v, &shape, var.device())?.to_dtype(var.dtype())?)?;
                to_f64(&loss_value(model, encoded, prompts, &target, weights)?)
            };
            let numeric = (eval_at(h)? - eval_at(-h)?) / (2.0 * h);
            out.push(GradientSample {
                parameter: name.to_string(),
                index,
                analytic: grad[index],
                numeric,
            });
        }
        var.set(&Tensor::from_vec(base, &shape, var.device())?.to_dtype(var.dtype())?)?;
    }
    Ok(out)
}

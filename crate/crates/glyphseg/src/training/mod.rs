//! Fine-tuning of the mask decoder, baseline training and validation-based
//! checkpoint selection.

pub mod config;
pub mod gradcheck;
pub mod loss;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer as _, ParamsAdamW};
use glyphseg_core::{
    derive_box_prompt, sample_point_prompts, seed, GlyphMask, MetricPair, PromptSet, Split,
};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_split, DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::evaluation::{encode_all, evaluate_encoded, mean_pair};
use crate::modelzoo::checkpoint::copy_as_best;
use crate::modelzoo::{
    load_checkpoint, save_checkpoint, BaselineSegmenter, CheckpointMeta, ModelKind,
    PromptableSegmenter, Segmenter,
};

pub use config::{Optimizer, SelectMetric, TrainConfig};
pub use loss::{batch_combined_loss, combined_loss, cross_entropy_loss, dice_loss, LossWeights};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_iou: f64,
    pub val_dice: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Path of the `best` checkpoint blob.
    pub best_checkpoint: PathBuf,
    pub best: CheckpointMeta,
    pub stats: Vec<EpochStats>,
}

/// Prompts for one training item in one epoch: one of 1 point, 2 points,
/// a 0.5 box or a 0.75 box, drawn from the item's epoch seed.
pub fn training_prompts(mask: &GlyphMask, image_id: &str, base_seed: u64, epoch: usize) -> Result<PromptSet> {
    let s = seed::item_seed(base_seed, image_id, "train", epoch as u64);
    let mut rng = seed::rng(s);
    let choice = rng.random_range(0..4u8);
    let sub_seed: u64 = rng.random();
    Ok(match choice {
        0 => PromptSet::from_points(sample_point_prompts(mask, 1, sub_seed)?),
        1 => PromptSet::from_points(sample_point_prompts(mask, 2, sub_seed)?),
        2 => PromptSet::from_box(derive_box_prompt(mask, 0.5)?),
        _ => PromptSet::from_box(derive_box_prompt(mask, 0.75)?),
    })
}

fn epoch_order(n: usize, base_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::item_seed(base_seed, "", "order", epoch as u64)));
    order
}

fn mask_tensor(mask: &GlyphMask, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
    let values: Vec<f32> = mask.bits().iter().map(|&b| f32::from(b)).collect();
    Ok(Tensor::from_vec(values, (1, 1, mask.height(), mask.width()), device)?.to_dtype(dtype)?)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn adam(vars: Vec<Var>, config: &TrainConfig) -> Result<AdamW> {
    let Optimizer::Adam = config.optimizer;
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr: config.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?)
}

struct RunLog {
    path: PathBuf,
    file: std::io::BufWriter<std::fs::File>,
}

impl RunLog {
    fn create(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(TRAIN_LOG_FILE);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file: std::io::BufWriter::new(file),
        })
    }

    fn append(&mut self, stats: &EpochStats) -> Result<()> {
        serde_json::to_writer(&mut self.file, stats)?;
        self.file.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Tracks the best epoch and writes its checkpoint.
struct Selector {
    best: Option<(CheckpointMeta, PathBuf)>,
}

impl Selector {
    /// Saves a checkpoint when `meta.val_dice` beats every earlier epoch.
    fn offer(
        &mut self,
        meta: CheckpointMeta,
        out_dir: &Path,
        state: impl FnOnce() -> Result<std::collections::BTreeMap<String, Tensor>>,
    ) -> Result<()> {
        if self.best.as_ref().is_some_and(|(b, _)| meta.val_dice <= b.val_dice) {
            return Ok(());
        }
        let blob = save_checkpoint(out_dir, &format!("epoch_{:04}", meta.epoch), &state()?, &meta)?;
        let best = copy_as_best(&blob)?;
        info!("epoch {}: new best val dice {:.4}", meta.epoch, meta.val_dice);
        self.best = Some((meta, best));
        Ok(())
    }

    fn finish(self, stats: Vec<EpochStats>) -> Result<TrainOutcome> {
        let (best, best_checkpoint) = self.best.ok_or(Error::EmptySplit("train"))?;
        Ok(TrainOutcome {
            best_checkpoint,
            best,
            stats,
        })
    }
}

fn check_finite(loss: f64, epoch: usize, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            epoch,
            step,
            value: loss as f32,
        })
    }
}

fn load_train_val(manifest: &DatasetManifest, size: usize) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let train = load_split(manifest, Split::Train, size)?;
    let val = load_split(manifest, Split::Val, size)?;
    Ok((train, val))
}

fn check_input_size(config: &TrainConfig, model: &dyn Segmenter) -> Result<()> {
    if config.input_size != model.input_size() {
        return Err(Error::Config(format!(
            "train input_size {} does not match the model's {}",
            config.input_size,
            model.input_size()
        )));
    }
    Ok(())
}

/// Validation samples, or the training samples when the split is empty.
fn validation_set<'a>(train: &'a [Sample], val: &'a [Sample]) -> &'a [Sample] {
    if val.is_empty() {
        warn!("validation split is empty; selecting on the training split");
        train
    } else {
        val
    }
}

pub fn train_finetune(
    model: &mut PromptableSegmenter,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_input_size(config, model)?;
    let (train, val) = load_train_val(manifest, config.input_size)?;
    train_finetune_samples(model, &train, &val, config, out_dir)
}

/// Fine-tunes the decoder of `model` on in-memory samples. The model ends
/// up holding the best epoch's decoder weights.
pub fn train_finetune_samples(
    model: &mut PromptableSegmenter,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_input_size(config, model)?;
    if !model.encoders_frozen() {
        return Err(Error::Config("freeze the encoders before fine-tuning".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let val = validation_set(train, val);
    let train_enc = encode_all(model, train)?;
    let val_enc = encode_all(model, val)?;
    let dtype = model.dtype();
    let targets = train
        .iter()
        .map(|s| mask_tensor(&s.mask, dtype, model.device()))
        .collect::<Result<Vec<_>>>()?;

    let mut opt = adam(model.trainable_vars(), config)?;
    let mut log = RunLog::create(out_dir)?;
    let mut selector = Selector { best: None };
    let mut stats = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for batch in epoch_order(train.len(), config.seed, epoch).chunks(config.batch_size) {
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let prompts = match training_prompts(&train[i].mask, &train[i].image_id, config.seed, epoch) {
                    Ok(p) => p,
                    Err(e) => {
                        warn!("{}: no training prompts ({e}); item skipped", train[i].image_id);
                        continue;
                    }
                };
                let logits = model.decode_logits(&train_enc[i], &prompts)?;
                let probs = candle_nn::ops::sigmoid(&logits)?;
                losses.push(combined_loss(&probs, &targets[i], config.loss)?);
            }
            if losses.is_empty() {
                continue;
            }
            let loss = (Tensor::stack(&losses, 0)?.sum_all()? / losses.len() as f64)?;
            let value = scalar(&loss)?;
            check_finite(value, epoch, step)?;
            opt.backward_step(&loss)?;
            loss_sum += value;
            batches += 1;
            step += 1;
        }
        let results = evaluate_encoded(
            model,
            "validation",
            val,
            &val_enc,
            Some(&config.eval_prompt_protocol),
            config.seed,
            0,
        )?;
        let v: MetricPair = mean_pair(&results.iter().map(|r| r.scores).collect::<Vec<_>>());
        let e = EpochStats {
            epoch,
            mean_train_loss: loss_sum / batches.max(1) as f64,
            val_iou: v.iou,
            val_dice: v.dice,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {:.4}, val iou {:.4}, val dice {:.4}",
            e.mean_train_loss, e.val_iou, e.val_dice
        );
        log.append(&e)?;
        let meta = CheckpointMeta {
            model_kind: ModelKind::Promptable,
            variant: Some(model.variant()),
            epoch,
            val_dice: e.val_dice,
            config_hash: config.config_hash(),
            encoder_frozen: model.encoders_frozen(),
            input_size: config.input_size,
        };
        selector.offer(meta, out_dir, || model.decoder_state())?;
        stats.push(e);
    }
    let outcome = selector.finish(stats)?;
    let (weights, _) = load_checkpoint(&outcome.best_checkpoint)?;
    model.load_decoder_state(&weights.into_iter().collect())?;
    Ok(outcome)
}

pub fn train_baseline(
    model: &BaselineSegmenter,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_input_size(config, model)?;
    let (train, val) = load_train_val(manifest, config.input_size)?;
    train_baseline_samples(model, &train, &val, config, out_dir)
}

fn stack_batch(samples: &[Sample], idx: &[usize], device: &candle_core::Device) -> Result<(Tensor, Tensor)> {
    let s = samples[idx[0]].size;
    let mut px = Vec::with_capacity(idx.len() * 3 * s * s);
    let mut tg = Vec::with_capacity(idx.len() * s * s);
    for &i in idx {
        px.extend_from_slice(&samples[i].pixels);
        tg.extend(samples[i].mask.bits().iter().map(|&b| f32::from(b)));
    }
    Ok((
        Tensor::from_vec(px, (idx.len(), 3, s, s), device)?,
        Tensor::from_vec(tg, (idx.len(), 1, s, s), device)?,
    ))
}

/// Trains a prompt-free baseline; the model ends up holding the best
/// epoch's weights.
pub fn train_baseline_samples(
    model: &BaselineSegmenter,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_input_size(config, model)?;
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    info!(
        "{} is prompt-free; eval_prompt_protocol `{}` is ignored",
        model.kind(),
        config.eval_prompt_protocol
    );
    let val = validation_set(train, val);
    let mut opt = adam(model.trainable_vars(), config)?;
    let mut log = RunLog::create(out_dir)?;
    let mut selector = Selector { best: None };
    let mut stats = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for batch in epoch_order(train.len(), config.seed, epoch).chunks(config.batch_size) {
            let (x, y) = stack_batch(train, batch, model.device())?;
            let probs = candle_nn::ops::sigmoid(&model.forward_logits(&x)?)?;
            let loss = batch_combined_loss(&probs, &y, config.loss)?;
            let value = scalar(&loss)?;
            check_finite(value, epoch, step)?;
            opt.backward_step(&loss)?;
            loss_sum += value;
            batches += 1;
            step += 1;
        }
        let val_enc = encode_all(model, val)?;
        let results = evaluate_encoded(model, "validation", val, &val_enc, None, config.seed, 0)?;
        let v = mean_pair(&results.iter().map(|r| r.scores).collect::<Vec<_>>());
        let e = EpochStats {
            epoch,
            mean_train_loss: loss_sum / batches.max(1) as f64,
            val_iou: v.iou,
            val_dice: v.dice,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {:.4}, val iou {:.4}, val dice {:.4}",
            e.mean_train_loss, e.val_iou, e.val_dice
        );
        log.append(&e)?;
        let meta = CheckpointMeta {
            model_kind: model.kind(),
            variant: None,
            epoch,
            val_dice: e.val_dice,
            config_hash: config.config_hash(),
            encoder_frozen: false,
            input_size: config.input_size,
        };
        selector.offer(meta, out_dir, || model.state())?;
        stats.push(e);
    }
    let outcome = selector.finish(stats)?;
    let (weights, _) = load_checkpoint(&outcome.best_checkpoint)?;
    model.load_state(&weights)?;
    Ok(outcome)
}

/// Runs `steps` full-batch optimization steps on one sample and returns the
/// combined loss before each step.
pub fn overfit_baseline(model: &BaselineSegmenter, sample: &Sample, steps: usize, config: &TrainConfig) -> Result<Vec<f64>> {
    let mut opt = adam(model.trainable_vars(), config)?;
    let samples = std::slice::from_ref(sample);
    let (x, y) = stack_batch(samples, &[0], model.device())?;
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let probs = candle_nn::ops::sigmoid(&model.forward_logits(&x)?)?;
        let loss = batch_combined_loss(&probs, &y, config.loss)?;
        let value = scalar(&loss)?;
        check_finite(value, 0, step)?;
        losses.push(value);
        opt.backward_step(&loss)?;
    }
    Ok(losses)
}

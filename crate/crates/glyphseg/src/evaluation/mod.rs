//! Seeded evaluation runs, result tables and overlays.

pub mod overlay;
pub mod table;

use std::io::Write;
use std::path::Path;

use glyphseg_core::{
    dice_score, iou, prompts_for_strategy, GlyphMask, MaskScope, MetricPair, MetricSummary,
    PromptSet, PromptStrategy,
};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::modelzoo::{Encoded, ModelKind, Segmenter};

pub use overlay::{render_overlay, save_overlay, overlay_file_name};
pub use table::{emit_results_table, parse_results_table, ResultRow, RunLabel};

pub const DEFAULT_RUNS: usize = 5;

/// Prompts used for one prediction target, as written to prompt dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub model: String,
    pub strategy: Option<PromptStrategy>,
    pub run_index: u64,
    pub image_id: String,
    pub block_label: Option<String>,
    pub item_seed: Option<u64>,
    pub prompts: PromptSet,
    /// Set when prompts could not be generated; the image then scores 0.
    pub failure: Option<String>,
}

/// Outcome for one image in one run.
#[derive(Debug, Clone)]
pub struct ImageResult {
    pub image_id: String,
    pub scores: MetricPair,
    pub prediction: GlyphMask,
    pub prompts: Vec<PromptRecord>,
}

/// Predicts one image and scores the (union of the) binary predictions
/// against its image-level mask.
///
/// Promptable models predict once per prompt target; prompt generation
/// failures are logged and score 0. Prompt-free models ignore `strategy`.
pub fn score_image(
    model: &dyn Segmenter,
    model_label: &str,
    encoded: &Encoded,
    sample: &Sample,
    strategy: Option<&PromptStrategy>,
    base_seed: u64,
    run_index: u64,
) -> Result<ImageResult> {
    let (h, w) = sample.mask.shape();
    if !model.is_promptable() {
        let prediction = model.decode(encoded, None)?.to_mask()?;
        let scores = pair(&prediction, &sample.mask)?;
        return Ok(ImageResult {
            image_id: sample.image_id.clone(),
            scores,
            prediction,
            prompts: Vec::new(),
        });
    }

    let strategy = strategy.ok_or_else(|| Error::Config("promptable models need a prompt strategy".into()))?;
    let record = |block_label, item_seed, prompts, failure| PromptRecord {
        model: model_label.to_string(),
        strategy: Some(*strategy),
        run_index,
        image_id: sample.image_id.clone(),
        block_label,
        item_seed,
        prompts,
        failure,
    };
    let targets = match prompts_for_strategy(
        &sample.image_id,
        &sample.mask,
        &sample.blocks,
        strategy,
        base_seed,
        run_index,
    ) {
        Ok(t) => t,
        Err(e) => {
            warn!("{}: prompt generation failed ({e}); image scored 0", sample.image_id);
            return Ok(ImageResult {
                image_id: sample.image_id.clone(),
                scores: MetricPair::ZERO,
                prediction: GlyphMask::empty(h, w, MaskScope::ImageLevel),
                prompts: vec![record(None, None, PromptSet::default(), Some(e.to_string()))],
            });
        }
    };

    let mut prediction = GlyphMask::empty(h, w, MaskScope::ImageLevel);
    let mut prompts = Vec::with_capacity(targets.len());
    for t in targets {
        let mask = model.decode(encoded, Some(&t.prompts))?.to_mask()?;
        prediction.union_with(&mask)?;
        prompts.push(record(t.block_label, Some(t.item_seed), t.prompts, None));
    }
    let scores = pair(&prediction, &sample.mask)?;
    Ok(ImageResult {
        image_id: sample.image_id.clone(),
        scores,
        prediction,
        prompts,
    })
}

fn pair(pred: &GlyphMask, gt: &GlyphMask) -> Result<MetricPair> {
    Ok(MetricPair {
        iou: iou(pred, gt)?,
        dice: dice_score(pred, gt)?,
    })
}

/// Unweighted mean over images.
pub fn mean_pair(pairs: &[MetricPair]) -> MetricPair {
    let n = pairs.len().max(1) as f64;
    MetricPair {
        iou: pairs.iter().map(|p| p.iou).sum::<f64>() / n,
        dice: pairs.iter().map(|p| p.dice).sum::<f64>() / n,
    }
}

/// Runs the image-dependent half of the model once per sample.
pub fn encode_all(model: &dyn Segmenter, samples: &[Sample]) -> Result<Vec<Encoded>> {
    samples.iter().map(|s| model.encode(&s.pixels)).collect()
}

/// One evaluation run over pre-encoded samples.
pub fn evaluate_encoded(
    model: &dyn Segmenter,
    model_label: &str,
    samples: &[Sample],
    encoded: &[Encoded],
    strategy: Option<&PromptStrategy>,
    base_seed: u64,
    run_index: u64,
) -> Result<Vec<ImageResult>> {
    if samples.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    samples
        .iter()
        .zip(encoded)
        .map(|(s, e)| score_image(model, model_label, e, s, strategy, base_seed, run_index))
        .collect()
}

/// Mean IoU and Dice over `samples` for one seeded run.
pub fn evaluate_once(
    model: &dyn Segmenter,
    samples: &[Sample],
    strategy: Option<&PromptStrategy>,
    base_seed: u64,
    run_index: u64,
) -> Result<MetricPair> {
    let encoded = encode_all(model, samples)?;
    let results = evaluate_encoded(model, "", samples, &encoded, strategy, base_seed, run_index)?;
    Ok(mean_pair(&results.iter().map(|r| r.scores).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    /// Row label, e.g. `unet`, `zero_shot`, `finetuned`.
    pub model: String,
    pub model_kind: ModelKind,
    /// `None` for prompt-free models.
    pub strategy: Option<PromptStrategy>,
    pub per_run: Vec<MetricPair>,
    pub mean: MetricPair,
    pub std: MetricPair,
    pub base_seed: u64,
}

impl StrategyReport {
    pub fn from_runs(
        model: &str,
        model_kind: ModelKind,
        strategy: Option<PromptStrategy>,
        per_run: Vec<MetricPair>,
        base_seed: u64,
    ) -> Result<Self> {
        let s = MetricSummary::of(&per_run);
        Ok(Self {
            model: model.to_string(),
            model_kind,
            strategy,
            per_run,
            mean: s.mean,
            std: s.std,
            base_seed,
        })
    }
}

/// Report plus every prompt used to produce it.
#[derive(Debug, Clone)]
pub struct AveragedEvaluation {
    pub report: StrategyReport,
    pub prompts: Vec<PromptRecord>,
}

/// Runs `n_runs` seeded evaluations (run indices `0..n_runs`) over
/// pre-encoded samples.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_averaged_encoded(
    model: &dyn Segmenter,
    model_label: &str,
    samples: &[Sample],
    encoded: &[Encoded],
    strategy: Option<&PromptStrategy>,
    base_seed: u64,
    n_runs: usize,
) -> Result<AveragedEvaluation> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    let strategy = if model.is_promptable() { strategy } else { None };
    let mut per_run = Vec::with_capacity(n_runs);
    let mut prompts = Vec::new();
    for run in 0..n_runs as u64 {
        let results = evaluate_encoded(model, model_label, samples, encoded, strategy, base_seed, run)?;
        per_run.push(mean_pair(&results.iter().map(|r| r.scores).collect::<Vec<_>>()));
        prompts.extend(results.into_iter().flat_map(|r| r.prompts));
    }
    let report = StrategyReport::from_runs(model_label, model.kind(), strategy.copied(), per_run, base_seed)?;
    Ok(AveragedEvaluation { report, prompts })
}

pub fn evaluate_averaged(
    model: &dyn Segmenter,
    model_label: &str,
    samples: &[Sample],
    strategy: Option<&PromptStrategy>,
    base_seed: u64,
    n_runs: usize,
) -> Result<StrategyReport> {
    let encoded = encode_all(model, samples)?;
    Ok(evaluate_averaged_encoded(model, model_label, samples, &encoded, strategy, base_seed, n_runs)?.report)
}

/// Writes prompt records as JSON lines.
pub fn write_prompt_dump(records: &[PromptRecord], path: &Path) -> Result<()> {
    crate::corpus::imaging::ensure_parent(path)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

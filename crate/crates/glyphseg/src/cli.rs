//! Command-line entry point.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use glyphseg_core::Split;
use log::info;
use serde::Serialize;

use crate::config::{RunConfig, TrainKind};
use crate::corpus::{ingest_directory, load_split, DatasetManifest, Sample, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::evaluation::{
    emit_results_table, encode_all, evaluate_averaged_encoded, overlay_file_name, save_overlay,
    score_image, write_prompt_dump, StrategyReport,
};
use crate::modelzoo::promptable::VIT_BASE_FILE_NAME;
use crate::modelzoo::{
    build_baseline, freeze_encoders, load_checkpoint, load_pretrained_promptable, ModelKind,
    PromptableSegmenter, Segmenter, Variant,
};
use crate::synthcorpus::generate_synthetic_corpus;
use crate::training::{train_baseline, train_finetune};

pub const RESULTS_FILE: &str = "results.csv";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const ERROR_FILE: &str = "error.json";
pub const CACHE_ENV: &str = "GLYPHSEG_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    VitBase,
    Stub,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::VitBase => Variant::VitBase,
            VariantArg::Stub => Variant::Stub,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "glyphseg", version, about = "Glyph block segmentation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory for this run.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pretrained weight file of the promptable model.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Trained checkpoint blob; repeatable for `eval`.
    #[arg(long, global = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Convert an annotation directory into masks and a split manifest.
    Ingest,
    /// Reassign the splits of a manifest into a new manifest.
    Split,
    /// Generate a synthetic corpus.
    Synth,
    /// Train the configured model kind.
    Train,
    /// Evaluate models over the configured prompt strategies.
    Eval,
    /// Render overlays for test images.
    Visualize,
}

/// Machine-readable failure description.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    /// Set when the run had already written into its output directory.
    pub partial_outputs: bool,
}

impl ErrorRecord {
    pub fn new(err: &Error, partial_outputs: bool) -> Self {
        Self {
            kind: err.kind(),
            message: err.to_string(),
            exit_code: err.exit_code(),
            partial_outputs,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print an error record as JSON on stderr and, once the output
/// directory exists, also write it there.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let out = cli.out.clone();
    let existed = out.as_ref().is_some_and(|o| o.exists());
    match run(&cli) {
        Ok(()) => 0,
        Err(err) => {
            let wrote = out.as_ref().is_some_and(|o| o.exists());
            let record = ErrorRecord::new(&err, wrote);
            let json = serde_json::to_string(&record).expect("error record serializes");
            eprintln!("{json}");
            if let Some(o) = out.filter(|_| wrote || existed) {
                let _ = std::fs::write(o.join(ERROR_FILE), &json);
            }
            record.exit_code
        }
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required".into()))
}

/// Loads and validates the configuration, then runs the command. Nothing
/// is written before the configuration is known to be valid.
pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(v) = cli.variant {
        cfg.model.variant = v.into();
    }
    if let Some(w) = &cli.weights {
        cfg.model.weights = Some(w.clone());
    }
    let out = out_dir(cli)?;
    cfg.write_snapshot(out)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg, out),
        Command::Split => cmd_split(&cfg, out),
        Command::Synth => generate_synthetic_corpus(&cfg.synth, out).map(|_| ()),
        Command::Train => cmd_train(&cfg, out),
        Command::Eval => cmd_eval(&cfg, &cli.checkpoint, out),
        Command::Visualize => cmd_visualize(&cfg, cli.checkpoint.first().map(PathBuf::as_path), out),
    }
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg
        .data
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("data.manifest is not set".into()))?;
    DatasetManifest::read(path)
}

fn cmd_ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = cfg
        .data
        .annotations
        .as_deref()
        .ok_or_else(|| Error::Config("data.annotations is not set".into()))?;
    let report = ingest_directory(dir, out, cfg.data.corpus_seed)?;
    info!(
        "wrote {} ({} images, {} rejected documents, {} skipped shapes)",
        report.manifest_path.display(),
        report.images,
        report.rejected_documents,
        report.skipped_shapes
    );
    Ok(())
}

fn cmd_split(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut m = manifest(cfg)?;
    for r in &mut m.records {
        r.image_path = m.root.join(&r.image_path).to_string_lossy().into_owned();
        r.mask_path = m.root.join(&r.mask_path).to_string_lossy().into_owned();
    }
    m.assign_splits(cfg.data.corpus_seed)?;
    m.root = out.to_path_buf();
    m.write(&out.join(MANIFEST_FILE))
}

/// Weight file: explicit path, then `$GLYPHSEG_CACHE`, then the user cache.
pub fn resolve_weights(cfg: &RunConfig) -> Option<PathBuf> {
    if let Some(w) = &cfg.model.weights {
        return Some(w.clone());
    }
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return Some(PathBuf::from(dir).join(VIT_BASE_FILE_NAME));
    }
    std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache/glyphseg").join(VIT_BASE_FILE_NAME))
}

fn load_promptable(cfg: &RunConfig, variant: Variant) -> Result<PromptableSegmenter> {
    let weights = resolve_weights(cfg);
    load_pretrained_promptable(weights.as_deref(), variant, cfg.model.weights_sha256.as_deref())
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let outcome = match cfg.model.kind {
        TrainKind::Finetune => {
            let mut model = freeze_encoders(load_promptable(cfg, cfg.model.variant)?);
            train_finetune(&mut model, &m, &cfg.train, out)?
        }
        TrainKind::Unet | TrainKind::Autoencoder => {
            let kind = if cfg.model.kind == TrainKind::Unet {
                ModelKind::Unet
            } else {
                ModelKind::Autoencoder
            };
            let model = build_baseline(kind, cfg.train.input_size)?;
            train_baseline(&model, &m, &cfg.train, out)?
        }
    };
    info!(
        "best epoch {} (val dice {:.4}) at {}",
        outcome.best.epoch,
        outcome.best.val_dice,
        outcome.best_checkpoint.display()
    );
    Ok(())
}

/// A model restored from a checkpoint together with its table label.
fn model_from_checkpoint(cfg: &RunConfig, path: &Path) -> Result<(Box<dyn Segmenter>, String)> {
    let (tensors, meta) = load_checkpoint(path)?;
    match meta.model_kind {
        ModelKind::Promptable => {
            let variant = meta.variant.unwrap_or(cfg.model.variant);
            let model = load_promptable(cfg, variant)?;
            model.load_decoder_state(&tensors)?;
            Ok((Box::new(model), "finetuned".to_string()))
        }
        kind => {
            let model = build_baseline(kind, meta.input_size)?;
            model.load_state(&tensors)?;
            Ok((Box::new(model), kind.to_string()))
        }
    }
}

fn samples_for(cache: &mut Vec<(usize, Vec<Sample>)>, m: &DatasetManifest, split: Split, size: usize) -> Result<usize> {
    if let Some(i) = cache.iter().position(|(s, _)| *s == size) {
        return Ok(i);
    }
    cache.push((size, load_split(m, split, size)?));
    Ok(cache.len() - 1)
}

fn cmd_eval(cfg: &RunConfig, checkpoints: &[PathBuf], out: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let mut models: Vec<(Box<dyn Segmenter>, String)> = Vec::new();
    if cfg.eval.zero_shot {
        models.push((Box::new(load_promptable(cfg, cfg.model.variant)?), "zero_shot".to_string()));
    }
    for c in checkpoints {
        models.push(model_from_checkpoint(cfg, c)?);
    }
    if models.is_empty() {
        return Err(Error::Config("nothing to evaluate: eval.zero_shot is false and no --checkpoint given".into()));
    }
    let mut cache = Vec::new();
    let mut reports: Vec<StrategyReport> = Vec::new();
    let mut prompts = Vec::new();
    for (model, label) in &models {
        let idx = samples_for(&mut cache, &m, cfg.eval.split, model.input_size())?;
        let samples = &cache[idx].1;
        let encoded = encode_all(model.as_ref(), samples)?;
        let strategies: Vec<Option<_>> = if model.is_promptable() {
            cfg.eval.strategies.iter().map(Some).collect()
        } else {
            vec![None]
        };
        for s in strategies {
            let r = evaluate_averaged_encoded(
                model.as_ref(),
                label,
                samples,
                &encoded,
                s,
                cfg.eval.base_seed,
                cfg.eval.n_runs,
            )?;
            info!(
                "{label} {}: iou {:.4} dice {:.4}",
                s.map_or("prompt-free".to_string(), |s| s.table_label()),
                r.report.mean.iou,
                r.report.mean.dice
            );
            reports.push(r.report);
            prompts.extend(r.prompts);
        }
    }
    emit_results_table(&reports, &out.join(RESULTS_FILE))?;
    write_prompt_dump(&prompts, &out.join(PROMPTS_FILE))
}

fn cmd_visualize(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    let (model, label): (Box<dyn Segmenter>, String) = match checkpoint {
        Some(c) => model_from_checkpoint(cfg, c)?,
        None => (Box::new(load_promptable(cfg, cfg.model.variant)?), "zero_shot".to_string()),
    };
    let samples = load_split(&m, Split::Test, model.input_size())?;
    if samples.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let strategy = model.is_promptable().then_some(&cfg.visualize.strategy);
    let dir = out.join("overlays");
    for s in samples.iter().take(cfg.visualize.images) {
        let encoded = model.encode(&s.pixels)?;
        let r = score_image(
            model.as_ref(),
            &label,
            &encoded,
            s,
            strategy,
            cfg.visualize.base_seed,
            cfg.visualize.run_index,
        )?;
        let sets: Vec<_> = r.prompts.iter().map(|p| p.prompts.clone()).collect();
        let name = overlay_file_name(&s.image_id, &label, strategy, cfg.visualize.run_index);
        let path = save_overlay(&dir, &name, &s.image, &s.mask, &r.prediction, &sets)?;
        info!("{}: iou {:.4} dice {:.4} -> {}", s.image_id, r.scores.iou, r.scores.dice, path.display());
    }
    Ok(())
}

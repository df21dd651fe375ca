//! Run configuration: one TOML document with a table per pipeline stage.
//!
//! Overrides of the form `section.key=value` are applied to the parsed
//! document before it is checked against the schema, so unknown keys fail
//! the same way whether they come from the file or the command line.

use std::path::{Path, PathBuf};

use glyphseg_core::{PromptStrategy, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelzoo::Variant;
use crate::synthcorpus::SynthConfig;
use crate::training::TrainConfig;

pub const SNAPSHOT_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainKind {
    #[default]
    Finetune,
    Unet,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Manifest consumed by `split`, `train`, `eval` and `visualize`.
    pub manifest: Option<PathBuf>,
    /// Annotation directory consumed by `ingest`.
    pub annotations: Option<PathBuf>,
    pub corpus_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: TrainKind,
    pub variant: Variant,
    pub weights: Option<PathBuf>,
    /// Expected hex prefix of the weight file's SHA-256.
    pub weights_sha256: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: TrainKind::Finetune,
            variant: Variant::VitBase,
            weights: None,
            weights_sha256: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub strategies: Vec<PromptStrategy>,
    pub n_runs: usize,
    pub base_seed: u64,
    pub split: Split,
    /// Also evaluate the promptable model without fine-tuning.
    pub zero_shot: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            strategies: vec![
                PromptStrategy::points(1),
                PromptStrategy::points(2),
                PromptStrategy::bbox(0.5),
                PromptStrategy::bbox(0.75),
                PromptStrategy::points_per_block(1),
                PromptStrategy::points_per_block(2),
                PromptStrategy::points_per_block(3),
            ],
            n_runs: 5,
            base_seed: 0,
            split: Split::Test,
            zero_shot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisualizeConfig {
    /// Number of test images to render.
    pub images: usize,
    pub strategy: PromptStrategy,
    pub run_index: u64,
    pub base_seed: u64,
}

impl Default for VisualizeConfig {
    fn default() -> Self {
        Self {
            images: 4,
            strategy: PromptStrategy::points(2),
            run_index: 0,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    pub visualize: VisualizeConfig,
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `a.b.c=value` override to `table`.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if self.eval.n_runs == 0 {
            return Err(Error::Config("eval.n_runs must be at least 1".into()));
        }
        for s in self.eval.strategies.iter().chain([&self.visualize.strategy]) {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration into `out_dir`.
    pub fn write_snapshot(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_round_trip() {
        let cfg = RunConfig::load(
            None,
            &[
                "train.epochs=10".into(),
                "train.eval_prompt_protocol=\"points:2\"".into(),
                "model.variant=stub".into(),
                "eval.strategies=[\"box:0.5\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.eval_prompt_protocol, PromptStrategy::points(2));
        assert_eq!(cfg.model.variant, Variant::Stub);
        assert_eq!(cfg.eval.strategies, vec![PromptStrategy::bbox(0.5)]);
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for bad in ["train.epoch=3", "nosuch.key=1", "train=3", "novalue"] {
            let err = RunConfig::load(None, &[bad.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn defaults_cover_fourteen_table_rows() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.eval.strategies.len(), 7);
        assert_eq!(cfg.eval.n_runs, 5);
    }
}

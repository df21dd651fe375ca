//! Checkpoints: a safetensors weight blob plus a JSON sidecar.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::promptable::Variant;
use super::ModelKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model_kind: ModelKind,
    /// Set for promptable models; the blob then holds decoder weights only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub epoch: usize,
    pub val_dice: f64,
    pub config_hash: String,
    pub encoder_frozen: bool,
    pub input_size: usize,
}

impl CheckpointMeta {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.val_dice) {
            return Err(Error::Manifest(format!(
                "checkpoint val_dice {} outside [0, 1]",
                self.val_dice
            )));
        }
        Ok(())
    }
}

/// Sidecar path for a weight blob: `x.safetensors` -> `x.json`.
pub fn sidecar_path(blob: &Path) -> PathBuf {
    blob.with_extension("json")
}

/// Writes `{dir}/{stem}.safetensors` and its sidecar, returning the blob path.
pub fn save_checkpoint(
    dir: &Path,
    stem: &str,
    tensors: &BTreeMap<String, Tensor>,
    meta: &CheckpointMeta,
) -> Result<PathBuf> {
    meta.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob = dir.join(format!("{stem}.safetensors"));
    let map: HashMap<String, Tensor> = tensors.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    candle_core::safetensors::save(&map, &blob)?;
    let sidecar = sidecar_path(&blob);
    let json = serde_json::to_vec_pretty(meta)?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    Ok(blob)
}

/// Copies a checkpoint blob and sidecar to `{dir}/best.*`.
pub fn copy_as_best(blob: &Path) -> Result<PathBuf> {
    let dir = blob.parent().unwrap_or(Path::new("."));
    let best = dir.join("best.safetensors");
    std::fs::copy(blob, &best).map_err(|e| Error::io(&best, e))?;
    let best_sidecar = sidecar_path(&best);
    std::fs::copy(sidecar_path(blob), &best_sidecar).map_err(|e| Error::io(&best_sidecar, e))?;
    Ok(best)
}

pub fn load_checkpoint(blob: &Path) -> Result<(HashMap<String, Tensor>, CheckpointMeta)> {
    if !blob.exists() {
        return Err(Error::WeightsNotFound(blob.to_path_buf()));
    }
    let sidecar = sidecar_path(blob);
    let raw = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&raw)?;
    meta.validate()?;
    let tensors = candle_core::safetensors::load(blob, &Device::Cpu)?;
    Ok((tensors, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_best_copy() {
        let dir = tempfile::tempdir().unwrap();
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "w".to_string(),
            Tensor::from_vec(vec![1f32, 2.0, 3.0], 3, &Device::Cpu).unwrap(),
        );
        let meta = CheckpointMeta {
            model_kind: ModelKind::Promptable,
            variant: Some(Variant::Stub),
            epoch: 3,
            val_dice: 0.5,
            config_hash: "abc".into(),
            encoder_frozen: true,
            input_size: 64,
        };
        let blob = save_checkpoint(dir.path(), "epoch_0003", &tensors, &meta).unwrap();
        let best = copy_as_best(&blob).unwrap();
        let (t, m) = load_checkpoint(&best).unwrap();
        assert_eq!(m, meta);
        assert_eq!(t["w"].to_vec1::<f32>().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn out_of_range_dice_is_rejected() {
        let meta = CheckpointMeta {
            model_kind: ModelKind::Unet,
            variant: None,
            epoch: 0,
            val_dice: 1.5,
            config_hash: String::new(),
            encoder_frozen: false,
            input_size: 64,
        };
        assert!(meta.validate().is_err());
    }
}

//! Segmenters behind one interface: the promptable model (pretrained or
//! stub) and the two prompt-free baselines.

pub mod baseline;
pub mod checkpoint;
pub mod decoder;
pub mod params;
pub mod promptable;

use std::fmt;
use std::str::FromStr;

use candle_core::{Device, Tensor};
use glyphseg_core::{GlyphMask, MaskScope, PromptSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use baseline::{build_baseline, BaselineSegmenter};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use decoder::{DecoderConfig, MaskDecoder};
pub use promptable::{freeze_encoders, load_pretrained_promptable, PromptableSegmenter, Variant};

/// Binarization threshold applied to every probability map.
pub const MASK_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Promptable,
    Unet,
    Autoencoder,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Promptable => "promptable",
            ModelKind::Unet => "unet",
            ModelKind::Autoencoder => "autoencoder",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "promptable" => Ok(ModelKind::Promptable),
            "unet" => Ok(ModelKind::Unet),
            "autoencoder" => Ok(ModelKind::Autoencoder),
            other => Err(Error::UnsupportedKind(other.to_string())),
        }
    }
}

/// Row-major foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl ProbabilityMap {
    /// Reads a `[1, 1, H, W]` or `[H, W]` probability tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let dims = t.dims();
        let (height, width) = (dims[dims.len() - 2], dims[dims.len() - 1]);
        let values = t
            .flatten_all()?
            .to_dtype(candle_core::DType::F32)?
            .to_vec1::<f32>()?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn to_mask(&self) -> Result<GlyphMask> {
        Ok(GlyphMask::from_probabilities(
            self.height,
            self.width,
            &self.values,
            MASK_THRESHOLD,
            MaskScope::ImageLevel,
        )?)
    }
}

/// Per-image state that can be decoded repeatedly with different prompts.
#[derive(Debug, Clone)]
pub struct Encoded(pub(crate) Tensor);

impl Encoded {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

pub trait Segmenter {
    fn kind(&self) -> ModelKind;

    /// Side length of the square input and of the output map.
    fn input_size(&self) -> usize;

    fn is_promptable(&self) -> bool {
        self.kind() == ModelKind::Promptable
    }

    /// Runs the image-dependent part of the model on `[3, S, S]` pixels in
    /// `[0, 1]`.
    fn encode(&self, pixels: &[f32]) -> Result<Encoded>;

    /// Produces the probability map. Prompt-free models ignore `prompts`.
    fn decode(&self, encoded: &Encoded, prompts: Option<&PromptSet>) -> Result<ProbabilityMap>;

    fn predict(&self, pixels: &[f32], prompts: Option<&PromptSet>) -> Result<ProbabilityMap> {
        let encoded = self.encode(pixels)?;
        self.decode(&encoded, prompts)
    }
}

/// `[1, 3, S, S]` tensor from channel-major pixels.
pub fn pixels_to_tensor(pixels: &[f32], size: usize, device: &Device) -> Result<Tensor> {
    if pixels.len() != 3 * size * size {
        return Err(Error::Config(format!(
            "expected {} pixel values for a {size}x{size} image, got {}",
            3 * size * size,
            pixels.len()
        )));
    }
    Ok(Tensor::from_slice(pixels, (1, 3, size, size), device)?)
}

//! Promptable segmenter: ViT image encoder, prompt encoder, mask decoder.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{VarBuilder, VarMap};
use candle_transformers::models::segment_anything::{
    image_encoder::ImageEncoderViT, prompt_encoder::PromptEncoder,
};
use glyphseg_core::{Polarity, PromptSet};
use log::info;
use serde::{Deserialize, Serialize};

use super::decoder::{DecoderConfig, MaskDecoder};
use super::params;
use super::{pixels_to_tensor, Encoded, ModelKind, ProbabilityMap, Segmenter};
use crate::error::{Error, Result};

/// Per-channel normalization of the pretrained encoder, on a 0..255 scale.
const PIXEL_MEAN: [f32; 3] = [123.675, 116.28, 103.53];
const PIXEL_STD: [f32; 3] = [58.395, 57.12, 57.375];

/// Published ViT-B checkpoints carry the first hex digits of their SHA-256
/// in the file name (`sam_vit_b_01ec64.pth`).
pub const VIT_BASE_SHA256_PREFIX: &str = "01ec64";
pub const VIT_BASE_FILE_NAME: &str = "sam_vit_b_01ec64.pth";

/// Seed for the randomly initialized stub weights.
pub const STUB_SEED: u64 = 0x5eed_57ab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    VitBase,
    Stub,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::VitBase => "vit_base",
            Variant::Stub => "stub",
        }
    }

    /// Side length of model inputs and outputs.
    pub fn input_size(self) -> usize {
        match self {
            Variant::VitBase => 256,
            Variant::Stub => 64,
        }
    }

    fn encoder(self) -> EncoderSpec {
        match self {
            Variant::VitBase => EncoderSpec {
                img_size: 1024,
                patch_size: 16,
                embed_dim: 768,
                depth: 12,
                num_heads: 12,
                out_chans: 256,
                window_size: 14,
                global_attn_indexes: &[2, 5, 8, 11],
                mask_in_chans: 16,
            },
            Variant::Stub => EncoderSpec {
                img_size: 64,
                patch_size: 4,
                embed_dim: 32,
                depth: 2,
                num_heads: 2,
                out_chans: 32,
                window_size: 4,
                global_attn_indexes: &[1],
                mask_in_chans: 16,
            },
        }
    }

    pub fn decoder(self) -> DecoderConfig {
        match self {
            Variant::VitBase => DecoderConfig::VIT_BASE,
            Variant::Stub => DecoderConfig::STUB,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vit_base" => Ok(Variant::VitBase),
            "stub" => Ok(Variant::Stub),
            other => Err(Error::UnsupportedVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct EncoderSpec {
    img_size: usize,
    patch_size: usize,
    embed_dim: usize,
    depth: usize,
    num_heads: usize,
    out_chans: usize,
    window_size: usize,
    global_attn_indexes: &'static [usize],
    mask_in_chans: usize,
}

impl EncoderSpec {
    fn grid(&self) -> usize {
        self.img_size / self.patch_size
    }
}

pub struct PromptableSegmenter {
    variant: Variant,
    device: Device,
    image_encoder: ImageEncoderViT,
    prompt_encoder: PromptEncoder,
    image_encoder_weights: BTreeMap<String, Tensor>,
    prompt_encoder_weights: BTreeMap<String, Tensor>,
    dense_pe: Tensor,
    decoder: MaskDecoder,
    decoder_vars: VarMap,
    encoders_frozen: bool,
}

impl fmt::Debug for PromptableSegmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PromptableSegmenter")
            .field("variant", &self.variant)
            .field("encoders_frozen", &self.encoders_frozen)
            .finish_non_exhaustive()
    }
}

/// Loads the promptable model.
///
/// `vit_base` reads the published checkpoint at `weights_path`; `stub`
/// ignores the path and builds small seeded encoders and decoder. When
/// `expected_sha256` is given the weight file digest must start with it.
pub fn load_pretrained_promptable(
    weights_path: Option<&Path>,
    variant: Variant,
    expected_sha256: Option<&str>,
) -> Result<PromptableSegmenter> {
    let device = Device::Cpu;
    match variant {
        Variant::Stub => PromptableSegmenter::stub(&device),
        Variant::VitBase => {
            let path = weights_path
                .ok_or_else(|| Error::WeightsNotFound(VIT_BASE_FILE_NAME.into()))?;
            if !path.exists() {
                return Err(Error::WeightsNotFound(path.to_path_buf()));
            }
            let digest = params::file_sha256(path)?;
            info!("weight file {} sha256 {digest}", path.display());
            if let Some(expected) = expected_sha256 {
                if !digest.starts_with(&expected.to_ascii_lowercase()) {
                    return Err(Error::ChecksumMismatch {
                        expected: expected.to_string(),
                        actual: digest,
                    });
                }
            }
            let tensors = params::read_weight_file(path, &device)?;
            PromptableSegmenter::from_tensors(variant, &tensors, &device)
        }
    }
}

/// Excludes both encoders from training. Idempotent.
pub fn freeze_encoders(mut model: PromptableSegmenter) -> PromptableSegmenter {
    model.freeze_encoders();
    model
}

fn sorted(map: HashMap<String, Tensor>) -> BTreeMap<String, Tensor> {
    map.into_iter().collect()
}

impl PromptableSegmenter {
    fn stub(device: &Device) -> Result<Self> {
        let variant = Variant::Stub;
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, device);
        build_encoders(variant, vb.pp("image_encoder"), vb.pp("prompt_encoder"))?;
        build_decoder(variant, vb.pp("mask_decoder"))?;
        params::init_deterministic(&vm, STUB_SEED)?;
        let tensors: HashMap<String, Tensor> = params::snapshot(&vm)?.into_iter().collect();
        Self::from_tensors(variant, &tensors, device)
    }

    /// Builds the model from a flat tensor map using the published
    /// `image_encoder.*`, `prompt_encoder.*` and `mask_decoder.*` names.
    pub fn from_tensors(variant: Variant, tensors: &HashMap<String, Tensor>, device: &Device) -> Result<Self> {
        let image_w = params::with_prefix(tensors, "image_encoder");
        let prompt_w = params::with_prefix(tensors, "prompt_encoder");
        let decoder_w = params::with_prefix(tensors, "mask_decoder");
        let (image_encoder, prompt_encoder) = build_encoders(
            variant,
            VarBuilder::from_tensors(image_w.clone(), DType::F32, device),
            VarBuilder::from_tensors(prompt_w.clone(), DType::F32, device),
        )?;

        let decoder_vars = VarMap::new();
        let decoder = build_decoder(
            variant,
            VarBuilder::from_varmap(&decoder_vars, DType::F32, device),
        )?;
        params::restore(&decoder_vars, &sorted(decoder_w))?;
        let dense_pe = prompt_encoder.get_dense_pe()?;

        let model = Self {
            variant,
            device: device.clone(),
            image_encoder,
            prompt_encoder,
            image_encoder_weights: sorted(image_w),
            prompt_encoder_weights: sorted(prompt_w),
            dense_pe,
            decoder,
            decoder_vars,
            encoders_frozen: false,
        };
        info!(
            "loaded {} model: image encoder {}, prompt encoder {}, decoder {} ({} trainable parameters)",
            variant,
            &model.image_encoder_checksum()?[..12],
            &model.prompt_encoder_checksum()?[..12],
            &model.decoder_checksum()?[..12],
            model.decoder_parameter_count(),
        );
        Ok(model)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Dtype of decoder parameters and outputs.
    pub fn dtype(&self) -> DType {
        self.decoder.dtype()
    }

    pub fn freeze_encoders(&mut self) {
        self.encoders_frozen = true;
    }

    pub fn encoders_frozen(&self) -> bool {
        self.encoders_frozen
    }

    /// Parameters the optimizer may update. Encoder weights are held as
    /// constants and never appear here.
    pub fn trainable_vars(&self) -> Vec<Var> {
        self.decoder_vars.all_vars()
    }

    pub fn decoder_vars(&self) -> &VarMap {
        &self.decoder_vars
    }

    pub fn decoder_parameter_count(&self) -> usize {
        params::parameter_count(&self.decoder_vars)
    }

    pub fn encoder_parameter_count(&self) -> usize {
        self.image_encoder_weights
            .values()
            .chain(self.prompt_encoder_weights.values())
            .map(Tensor::elem_count)
            .sum()
    }

    pub fn image_encoder_checksum(&self) -> Result<String> {
        params::checksum(self.image_encoder_weights.iter())
    }

    pub fn prompt_encoder_checksum(&self) -> Result<String> {
        params::checksum(self.prompt_encoder_weights.iter())
    }

    pub fn decoder_checksum(&self) -> Result<String> {
        params::varmap_checksum(&self.decoder_vars)
    }

    /// Decoder weights keyed by their `mask_decoder.*` checkpoint names.
    pub fn decoder_state(&self) -> Result<BTreeMap<String, Tensor>> {
        Ok(params::snapshot(&self.decoder_vars)?
            .into_iter()
            .map(|(k, v)| (format!("mask_decoder.{k}"), v))
            .collect())
    }

    /// Overwrites the decoder with weights from `decoder_state`.
    pub fn load_decoder_state(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        params::restore(&self.decoder_vars, &sorted(params::with_prefix(tensors, "mask_decoder")))
    }

    /// Rebuilds the decoder in `dtype`, keeping its weights.
    pub fn with_decoder_dtype(mut self, dtype: DType) -> Result<Self> {
        let values = params::snapshot(&self.decoder_vars)?;
        let vars = VarMap::new();
        self.decoder = build_decoder(self.variant, VarBuilder::from_varmap(&vars, dtype, &self.device))?;
        params::restore(&vars, &values)?;
        self.decoder_vars = vars;
        Ok(self)
    }

    pub fn encode_tensor(&self, pixels: &Tensor) -> Result<Tensor> {
        let spec = self.variant.encoder();
        let x = (pixels * 255.0)?;
        let x = if spec.img_size != self.input_size() {
            x.upsample_bilinear2d(spec.img_size, spec.img_size, false)?
        } else {
            x
        };
        let mean = Tensor::from_slice(&PIXEL_MEAN, (1, 3, 1, 1), &self.device)?;
        let std = Tensor::from_slice(&PIXEL_STD, (1, 3, 1, 1), &self.device)?;
        let x = x.broadcast_sub(&mean)?.broadcast_div(&std)?;
        Ok(self.image_encoder.forward(&x)?.detach())
    }

    /// Decoder logits at input resolution, `[1, 1, S, S]`, in the decoder's
    /// dtype. Gradients flow into decoder parameters only.
    pub fn decode_logits(&self, encoded: &Encoded, prompts: &PromptSet) -> Result<Tensor> {
        if prompts.is_empty() {
            return Err(Error::EmptyPromptSet);
        }
        let spec = self.variant.encoder();
        let scale = spec.img_size as f64 / self.input_size() as f64;
        // The prompt encoder shifts coordinates by half a pixel; undo it so
        // continuous input coordinates map exactly onto encoder coordinates.
        let to_encoder = |v: f64| (v * scale - 0.5) as f32;

        let points = if prompts.points.is_empty() {
            None
        } else {
            let n = prompts.points.len();
            let coords: Vec<f32> = prompts
                .points
                .iter()
                .flat_map(|p| [to_encoder(p.x), to_encoder(p.y)])
                .collect();
            let labels: Vec<f32> = prompts
                .points
                .iter()
                .map(|p| match p.polarity {
                    Polarity::Positive => 1.0,
                    Polarity::Negative => 0.0,
                })
                .collect();
            Some((
                Tensor::from_vec(coords, (1, n, 2), &self.device)?,
                Tensor::from_vec(labels, (1, n), &self.device)?,
            ))
        };
        let bbox = match prompts.bbox {
            Some(b) => Some(Tensor::from_vec(
                vec![
                    to_encoder(b.x_min),
                    to_encoder(b.y_min),
                    to_encoder(b.x_max),
                    to_encoder(b.y_max),
                ],
                (1, 4),
                &self.device,
            )?),
            None => None,
        };
        // Points and boxes are embedded separately: the upstream box path
        // returns `[1, 2C]`, and the padding token is appended last.
        let mut sparse_parts = Vec::new();
        let mut dense = None;
        if let Some((c, l)) = points.as_ref() {
            let (sp, de) = self.prompt_encoder.forward(Some((c, l)), None, None)?;
            let sp = if bbox.is_some() { sp.narrow(1, 0, c.dim(1)?)? } else { sp };
            sparse_parts.push(sp);
            dense = Some(de);
        }
        if let Some(b) = bbox.as_ref() {
            let (sp, de) = self.prompt_encoder.forward(None, Some(b), None)?;
            let c = *sp.dims().last().expect("box embedding has a channel axis");
            sparse_parts.push(sp.reshape((1, 2, c / 2))?);
            dense = Some(de);
        }
        let sparse = Tensor::cat(&sparse_parts, 1)?;
        let dense = dense.expect("prompt set is not empty");

        let dtype = self.decoder.dtype();
        let logits = self.decoder.forward(
            &encoded.0.to_dtype(dtype)?,
            &self.dense_pe.to_dtype(dtype)?,
            &sparse.to_dtype(dtype)?,
            &dense.to_dtype(dtype)?,
        )?;
        resize_bilinear(&logits, self.input_size())
    }
}

impl Segmenter for PromptableSegmenter {
    fn kind(&self) -> ModelKind {
        ModelKind::Promptable
    }

    fn input_size(&self) -> usize {
        self.variant.input_size()
    }

    fn encode(&self, pixels: &[f32]) -> Result<Encoded> {
        let x = pixels_to_tensor(pixels, self.input_size(), &self.device)?;
        Ok(Encoded(self.encode_tensor(&x)?))
    }

    fn decode(&self, encoded: &Encoded, prompts: Option<&PromptSet>) -> Result<ProbabilityMap> {
        let prompts = prompts.ok_or(Error::EmptyPromptSet)?;
        let logits = self.decode_logits(encoded, prompts)?;
        ProbabilityMap::from_tensor(&candle_nn::ops::sigmoid(&logits.detach())?)
    }
}

fn build_encoders(
    variant: Variant,
    image_vb: VarBuilder,
    prompt_vb: VarBuilder,
) -> Result<(ImageEncoderViT, PromptEncoder)> {
    let s = variant.encoder();
    let image = ImageEncoderViT::new(
        s.img_size,
        s.patch_size,
        3,
        s.embed_dim,
        s.depth,
        s.num_heads,
        s.out_chans,
        true,
        true,
        true,
        s.window_size,
        s.global_attn_indexes,
        image_vb,
    )?;
    let prompt = PromptEncoder::new(
        s.out_chans,
        (s.grid(), s.grid()),
        (s.img_size, s.img_size),
        s.mask_in_chans,
        prompt_vb,
    )?;
    Ok((image, prompt))
}

fn build_decoder(variant: Variant, vb: VarBuilder) -> Result<MaskDecoder> {
    Ok(MaskDecoder::new(variant.decoder(), vb)?)
}

/// Interpolation weights of a half-pixel-centered bilinear resize from
/// `inp` to `out` samples, as a row-major `out x inp` matrix.
fn bilinear_weights(out: usize, inp: usize) -> Vec<f32> {
    let mut w = vec![0f32; out * inp];
    let ratio = inp as f64 / out as f64;
    for i in 0..out {
        let src = ((i as f64 + 0.5) * ratio - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(inp - 1);
        let i1 = (i0 + 1).min(inp - 1);
        let t = (src - i0 as f64) as f32;
        w[i * inp + i0] += 1.0 - t;
        w[i * inp + i1] += t;
    }
    w
}

/// Bilinear resize of `[1, 1, H, W]` to `[1, 1, size, size]` written as two
/// matrix products so it is differentiable. Identity when sizes match.
pub fn resize_bilinear(x: &Tensor, size: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if h == size && w == size {
        return Ok(x.clone());
    }
    let dev = x.device();
    let rh = Tensor::from_vec(bilinear_weights(size, h), (size, h), dev)?.to_dtype(x.dtype())?;
    let rw = Tensor::from_vec(bilinear_weights(size, w), (size, w), dev)?.to_dtype(x.dtype())?;
    let plane = x.reshape((h, w))?;
    Ok(rh.matmul(&plane)?.matmul(&rw.t()?)?.reshape((1, 1, size, size))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use glyphseg_core::PointPrompt;

    fn stub() -> PromptableSegmenter {
        load_pretrained_promptable(None, Variant::Stub, None).unwrap()
    }

    fn random_pixels(n: usize) -> Vec<f32> {
        (0..n).map(|i| ((i * 7919) % 1000) as f32 / 1000.0).collect()
    }

    #[test]
    fn stub_predicts_input_sized_probabilities() {
        let m = stub();
        let px = random_pixels(3 * 64 * 64);
        let prompts = PromptSet::from_points(vec![PointPrompt::positive_at_pixel(10, 20)]);
        let p = m.predict(&px, Some(&prompts)).unwrap();
        assert_eq!((p.height, p.width), (64, 64));
        assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let again = m.predict(&px, Some(&prompts)).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn empty_prompts_are_rejected() {
        let m = stub();
        let px = random_pixels(3 * 64 * 64);
        assert!(matches!(m.predict(&px, None), Err(Error::EmptyPromptSet)));
        assert!(matches!(
            m.predict(&px, Some(&PromptSet::default())),
            Err(Error::EmptyPromptSet)
        ));
    }

    #[test]
    fn box_prompt_is_accepted() {
        let m = stub();
        let px = random_pixels(3 * 64 * 64);
        let prompts = PromptSet::from_box(glyphseg_core::BoxPrompt {
            x_min: 4.0,
            y_min: 8.0,
            x_max: 30.0,
            y_max: 40.0,
        });
        assert_eq!(m.predict(&px, Some(&prompts)).unwrap().values.len(), 64 * 64);
        let mut mixed = prompts.clone();
        mixed.points.push(PointPrompt::positive_at_pixel(10, 20));
        let a = m.predict(&px, Some(&mixed)).unwrap();
        let b = m.predict(&px, Some(&prompts)).unwrap();
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn freeze_is_idempotent_and_trainable_set_is_decoder() {
        let m = freeze_encoders(freeze_encoders(stub()));
        assert!(m.encoders_frozen());
        let n: usize = m.trainable_vars().iter().map(|v| v.elem_count()).sum();
        assert_eq!(n, m.decoder_parameter_count());
        assert!(m.encoder_parameter_count() > 0);
    }

    #[test]
    fn vit_base_without_file_is_weights_not_found() {
        let err = load_pretrained_promptable(Some(Path::new("/nonexistent/sam.pth")), Variant::VitBase, None)
            .unwrap_err();
        assert!(matches!(err, Error::WeightsNotFound(_)));
        assert!(matches!("vit_huge".parse::<Variant>(), Err(Error::UnsupportedVariant(_))));
    }

    #[test]
    fn bilinear_weights_rows_sum_to_one() {
        for (o, i) in [(8, 4), (5, 3), (4, 8)] {
            let w = bilinear_weights(o, i);
            for r in 0..o {
                let s: f32 = w[r * i..(r + 1) * i].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resize_matches_candle_forward() {
        let dev = Device::Cpu;
        let x = Tensor::randn(0f32, 1.0, (1, 1, 5, 7), &dev).unwrap();
        let a = resize_bilinear(&x, 12).unwrap();
        let b = x.upsample_bilinear2d(12, 12, false).unwrap();
        let d = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(d < 1e-5, "max diff {d}");
    }
}

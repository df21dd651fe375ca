//! Prompt-free UNet and autoencoder baselines.
//!
//! Four encoder stages of 16, 32, 64 and 128 channels, each two 3x3
//! convolutions with ReLU followed by 2x2 max pooling, a 256-channel
//! bottleneck, and a mirrored decoder of 2x2 transposed convolutions. The
//! UNet concatenates each encoder stage onto the decoder stage of equal
//! resolution; the autoencoder does not. A 1x1 convolution and sigmoid
//! produce the probability map.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{Conv2d, Conv2dConfig, ConvTranspose2d, ConvTranspose2dConfig, VarBuilder, VarMap};
use glyphseg_core::PromptSet;

use super::params;
use super::{pixels_to_tensor, Encoded, ModelKind, ProbabilityMap, Segmenter};
use crate::error::{Error, Result};

pub const STAGE_CHANNELS: [usize; 4] = [16, 32, 64, 128];
pub const BOTTLENECK_CHANNELS: usize = 256;
pub const BASELINE_SEED: u64 = 0xba5e_11e5;

#[derive(Debug, Clone)]
struct DoubleConv {
    a: Conv2d,
    b: Conv2d,
}

impl DoubleConv {
    fn new(cin: usize, cout: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        Ok(Self {
            a: candle_nn::conv2d(cin, cout, 3, cfg, vb.pp("0"))?,
            b: candle_nn::conv2d(cout, cout, 3, cfg, vb.pp("1"))?,
        })
    }
}

impl Module for DoubleConv {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        x.apply(&self.a)?.relu()?.apply(&self.b)?.relu()
    }
}

struct Network {
    down: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    up: Vec<ConvTranspose2d>,
    merge: Vec<DoubleConv>,
    head: Conv2d,
    skip_connections: bool,
}

impl Network {
    fn new(skip_connections: bool, vb: VarBuilder) -> candle_core::Result<Self> {
        let mut down = Vec::new();
        let mut cin = 3;
        for (i, &c) in STAGE_CHANNELS.iter().enumerate() {
            down.push(DoubleConv::new(cin, c, vb.pp(format!("down.{i}")))?);
            cin = c;
        }
        let bottleneck = DoubleConv::new(cin, BOTTLENECK_CHANNELS, vb.pp("bottleneck"))?;
        let mut up = Vec::new();
        let mut merge = Vec::new();
        let mut cin = BOTTLENECK_CHANNELS;
        let up_cfg = ConvTranspose2dConfig {
            stride: 2,
            ..Default::default()
        };
        for (i, &c) in STAGE_CHANNELS.iter().rev().enumerate() {
            up.push(candle_nn::conv_transpose2d(cin, c, 2, up_cfg, vb.pp(format!("up.{i}")))?);
            let merged = if skip_connections { 2 * c } else { c };
            merge.push(DoubleConv::new(merged, c, vb.pp(format!("merge.{i}")))?);
            cin = c;
        }
        let head = candle_nn::conv2d(cin, 1, 1, Default::default(), vb.pp("head"))?;
        Ok(Self {
            down,
            bottleneck,
            up,
            merge,
            head,
            skip_connections,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mut skips = Vec::with_capacity(self.down.len());
        let mut x = x.clone();
        for stage in &self.down {
            x = stage.forward(&x)?;
            skips.push(x.clone());
            x = x.max_pool2d(2)?;
        }
        x = self.bottleneck.forward(&x)?;
        for ((up, merge), skip) in self.up.iter().zip(&self.merge).zip(skips.iter().rev()) {
            x = up.forward(&x)?;
            if self.skip_connections {
                x = Tensor::cat(&[&x, skip], 1)?;
            }
            x = merge.forward(&x)?;
        }
        self.head.forward(&x)
    }
}

pub struct BaselineSegmenter {
    kind: ModelKind,
    input_size: usize,
    device: Device,
    vars: VarMap,
    net: Network,
}

impl fmt::Debug for BaselineSegmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaselineSegmenter")
            .field("kind", &self.kind)
            .field("input_size", &self.input_size)
            .finish_non_exhaustive()
    }
}

/// Builds a seeded baseline for square inputs of side `input_size`, which
/// must be divisible by 16.
pub fn build_baseline(kind: ModelKind, input_size: usize) -> Result<BaselineSegmenter> {
    let skip_connections = match kind {
        ModelKind::Unet => true,
        ModelKind::Autoencoder => false,
        ModelKind::Promptable => return Err(Error::UnsupportedKind(kind.to_string())),
    };
    if input_size == 0 || !input_size.is_multiple_of(16) {
        return Err(Error::Config(format!(
            "baseline input size must be a positive multiple of 16, got {input_size}"
        )));
    }
    let device = Device::Cpu;
    let vars = VarMap::new();
    let net = Network::new(skip_connections, VarBuilder::from_varmap(&vars, DType::F32, &device))?;
    params::init_deterministic(&vars, BASELINE_SEED)?;
    Ok(BaselineSegmenter {
        kind,
        input_size,
        device,
        vars,
        net,
    })
}

impl BaselineSegmenter {
    pub fn skip_connections(&self) -> bool {
        self.net.skip_connections
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.vars.all_vars()
    }

    pub fn parameter_count(&self) -> usize {
        params::parameter_count(&self.vars)
    }

    pub fn checksum(&self) -> Result<String> {
        params::varmap_checksum(&self.vars)
    }

    pub fn state(&self) -> Result<BTreeMap<String, Tensor>> {
        params::snapshot(&self.vars)
    }

    pub fn load_state(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        params::restore(&self.vars, &tensors.clone().into_iter().collect())
    }

    /// Logits for a `[B, 3, S, S]` batch with values in `[0, 1]`.
    pub fn forward_logits(&self, pixels: &Tensor) -> Result<Tensor> {
        Ok(self.net.forward(&(pixels - 0.5)?)?)
    }
}

impl Segmenter for BaselineSegmenter {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn encode(&self, pixels: &[f32]) -> Result<Encoded> {
        let x = pixels_to_tensor(pixels, self.input_size, &self.device)?;
        let probs = candle_nn::ops::sigmoid(&self.forward_logits(&x)?)?;
        Ok(Encoded(probs.detach()))
    }

    fn decode(&self, encoded: &Encoded, _prompts: Option<&PromptSet>) -> Result<ProbabilityMap> {
        ProbabilityMap::from_tensor(&encoded.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_kinds_map_to_input_size() {
        for kind in [ModelKind::Unet, ModelKind::Autoencoder] {
            let m = build_baseline(kind, 32).unwrap();
            let px: Vec<f32> = (0..3 * 32 * 32).map(|i| (i % 17) as f32 / 17.0).collect();
            let p = m.predict(&px, None).unwrap();
            assert_eq!((p.height, p.width), (32, 32));
            assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn skip_flag_and_rejections() {
        assert!(build_baseline(ModelKind::Unet, 16).unwrap().skip_connections());
        assert!(!build_baseline(ModelKind::Autoencoder, 16).unwrap().skip_connections());
        assert!(matches!(
            build_baseline(ModelKind::Promptable, 16),
            Err(Error::UnsupportedKind(_))
        ));
        assert!(matches!(build_baseline(ModelKind::Unet, 20), Err(Error::Config(_))));
    }

    #[test]
    fn construction_is_seeded() {
        let a = build_baseline(ModelKind::Unet, 16).unwrap().checksum().unwrap();
        let b = build_baseline(ModelKind::Unet, 16).unwrap().checksum().unwrap();
        assert_eq!(a, b);
    }
}

//! Trainable mask decoder.
//!
//! A two-way transformer that attends between prompt tokens and image
//! embedding tokens, followed by a 4x transposed-convolution upscaler and
//! per-mask hypernetwork heads. Parameter names follow the published
//! `mask_decoder.*` checkpoint layout so pretrained decoder weights load
//! directly. Every op used here has a backward pass, which the stock
//! inference-only decoder lacks.

use candle_core::{DType, IndexOp, Module, Result, Tensor, D};
use candle_nn::{ConvTranspose2d, ConvTranspose2dConfig, Linear, VarBuilder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub transformer_dim: usize,
    pub num_heads: usize,
    pub mlp_dim: usize,
    pub depth: usize,
    pub attention_downsample_rate: usize,
    /// Masks predicted besides the single-mask output token.
    pub num_multimask_outputs: usize,
}

impl DecoderConfig {
    /// Layout of the published ViT-B checkpoint.
    pub const VIT_BASE: DecoderConfig = DecoderConfig {
        transformer_dim: 256,
        num_heads: 8,
        mlp_dim: 2048,
        depth: 2,
        attention_downsample_rate: 2,
        num_multimask_outputs: 3,
    };

    pub const STUB: DecoderConfig = DecoderConfig {
        transformer_dim: 32,
        num_heads: 4,
        mlp_dim: 64,
        depth: 2,
        attention_downsample_rate: 2,
        num_multimask_outputs: 3,
    };
}

/// Layer norm over the last dimension, written with differentiable ops.
#[derive(Debug, Clone)]
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(dim: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        let weight = vb.get_with_hints(dim, "weight", candle_nn::Init::Const(1.0))?;
        let bias = vb.get_with_hints(dim, "bias", candle_nn::Init::Const(0.0))?;
        Ok(Self { weight, bias, eps })
    }
}

impl Module for LayerNorm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)
    }
}

/// Layer norm across the channel axis of an NCHW tensor.
#[derive(Debug, Clone)]
struct LayerNorm2d {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm2d {
    fn new(channels: usize, eps: f64, vb: VarBuilder) -> Result<Self> {
        let weight = vb.get_with_hints(channels, "weight", candle_nn::Init::Const(1.0))?;
        let bias = vb.get_with_hints(channels, "bias", candle_nn::Init::Const(0.0))?;
        Ok(Self { weight, bias, eps })
    }
}

impl Module for LayerNorm2d {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let c = self.weight.dim(0)?;
        normed
            .broadcast_mul(&self.weight.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.bias.reshape((1, c, 1, 1))?)
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q_proj: Linear,
    k_proj: Linear,
    v_proj: Linear,
    out_proj: Linear,
    num_heads: usize,
}

impl Attention {
    fn new(dim: usize, num_heads: usize, downsample_rate: usize, vb: VarBuilder) -> Result<Self> {
        let internal = dim / downsample_rate;
        if !internal.is_multiple_of(num_heads) {
            candle_core::bail!("internal dim {internal} not divisible by {num_heads} heads");
        }
        Ok(Self {
            q_proj: candle_nn::linear(dim, internal, vb.pp("q_proj"))?,
            k_proj: candle_nn::linear(dim, internal, vb.pp("k_proj"))?,
            v_proj: candle_nn::linear(dim, internal, vb.pp("v_proj"))?,
            out_proj: candle_nn::linear(internal, dim, vb.pp("out_proj"))?,
            num_heads,
        })
    }

    fn separate_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n, c) = x.dims3()?;
        x.reshape((b, n, self.num_heads, c / self.num_heads))?
            .transpose(1, 2)?
            .contiguous()
    }

    fn forward(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
        let q = self.separate_heads(&self.q_proj.forward(q)?)?;
        let k = self.separate_heads(&self.k_proj.forward(k)?)?;
        let v = self.separate_heads(&self.v_proj.forward(v)?)?;
        let (b, h, n, c_head) = q.dims4()?;
        let attn = (q.matmul(&k.t()?.contiguous()?)? / (c_head as f64).sqrt())?;
        let attn = candle_nn::ops::softmax(&attn, D::Minus1)?;
        let out = attn.matmul(&v)?;
        let out = out.transpose(1, 2)?.contiguous()?.reshape((b, n, h * c_head))?;
        self.out_proj.forward(&out)
    }
}

#[derive(Debug, Clone)]
struct MlpBlock {
    lin1: Linear,
    lin2: Linear,
}

impl MlpBlock {
    fn new(dim: usize, hidden: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            lin1: candle_nn::linear(dim, hidden, vb.pp("lin1"))?,
            lin2: candle_nn::linear(hidden, dim, vb.pp("lin2"))?,
        })
    }
}

impl Module for MlpBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.lin2.forward(&self.lin1.forward(x)?.relu()?)
    }
}

#[derive(Debug, Clone)]
struct TwoWayAttentionBlock {
    self_attn: Attention,
    norm1: LayerNorm,
    cross_attn_token_to_image: Attention,
    norm2: LayerNorm,
    mlp: MlpBlock,
    norm3: LayerNorm,
    norm4: LayerNorm,
    cross_attn_image_to_token: Attention,
    skip_first_layer_pe: bool,
}

impl TwoWayAttentionBlock {
    fn new(cfg: &DecoderConfig, skip_first_layer_pe: bool, vb: VarBuilder) -> Result<Self> {
        let d = cfg.transformer_dim;
        Ok(Self {
            self_attn: Attention::new(d, cfg.num_heads, 1, vb.pp("self_attn"))?,
            norm1: LayerNorm::new(d, 1e-5, vb.pp("norm1"))?,
            cross_attn_token_to_image: Attention::new(
                d,
                cfg.num_heads,
                cfg.attention_downsample_rate,
                vb.pp("cross_attn_token_to_image"),
            )?,
            norm2: LayerNorm::new(d, 1e-5, vb.pp("norm2"))?,
            mlp: MlpBlock::new(d, cfg.mlp_dim, vb.pp("mlp"))?,
            norm3: LayerNorm::new(d, 1e-5, vb.pp("norm3"))?,
            norm4: LayerNorm::new(d, 1e-5, vb.pp("norm4"))?,
            cross_attn_image_to_token: Attention::new(
                d,
                cfg.num_heads,
                cfg.attention_downsample_rate,
                vb.pp("cross_attn_image_to_token"),
            )?,
            skip_first_layer_pe,
        })
    }

    fn forward(
        &self,
        queries: &Tensor,
        keys: &Tensor,
        query_pe: &Tensor,
        key_pe: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let queries = if self.skip_first_layer_pe {
            self.self_attn.forward(queries, queries, queries)?
        } else {
            let q = (queries + query_pe)?;
            (queries + self.self_attn.forward(&q, &q, queries)?)?
        };
        let queries = self.norm1.forward(&queries)?;

        let q = (&queries + query_pe)?;
        let k = (keys + key_pe)?;
        let queries = (&queries + self.cross_attn_token_to_image.forward(&q, &k, keys)?)?;
        let queries = self.norm2.forward(&queries)?;

        let queries = (&queries + self.mlp.forward(&queries)?)?;
        let queries = self.norm3.forward(&queries)?;

        let q = (&queries + query_pe)?;
        let k = (keys + key_pe)?;
        let keys = (keys + self.cross_attn_image_to_token.forward(&k, &q, &queries)?)?;
        let keys = self.norm4.forward(&keys)?;
        Ok((queries, keys))
    }
}

#[derive(Debug, Clone)]
struct TwoWayTransformer {
    layers: Vec<TwoWayAttentionBlock>,
    final_attn_token_to_image: Attention,
    norm_final_attn: LayerNorm,
}

impl TwoWayTransformer {
    fn new(cfg: &DecoderConfig, vb: VarBuilder) -> Result<Self> {
        let layers = (0..cfg.depth)
            .map(|i| TwoWayAttentionBlock::new(cfg, i == 0, vb.pp(format!("layers.{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            final_attn_token_to_image: Attention::new(
                cfg.transformer_dim,
                cfg.num_heads,
                cfg.attention_downsample_rate,
                vb.pp("final_attn_token_to_image"),
            )?,
            norm_final_attn: LayerNorm::new(cfg.transformer_dim, 1e-5, vb.pp("norm_final_attn"))?,
        })
    }

    /// `image` and `image_pe` are `[B, C, H, W]`, `tokens` is `[B, N, C]`.
    fn forward(&self, image: &Tensor, image_pe: &Tensor, tokens: &Tensor) -> Result<(Tensor, Tensor)> {
        let image = image.flatten_from(2)?.transpose(1, 2)?.contiguous()?;
        let image_pe = image_pe.flatten_from(2)?.transpose(1, 2)?.contiguous()?;
        let mut queries = tokens.clone();
        let mut keys = image;
        for layer in &self.layers {
            (queries, keys) = layer.forward(&queries, &keys, tokens, &image_pe)?;
        }
        let q = (&queries + tokens)?;
        let k = (&keys + &image_pe)?;
        let queries = (&queries + self.final_attn_token_to_image.forward(&q, &k, &keys)?)?;
        let queries = self.norm_final_attn.forward(&queries)?;
        Ok((queries, keys))
    }
}

/// Stack of linear layers with ReLU between them.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    fn new(input: usize, hidden: usize, output: usize, depth: usize, vb: VarBuilder) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| {
                let i_dim = if i == 0 { input } else { hidden };
                let o_dim = if i + 1 == depth { output } else { hidden };
                candle_nn::linear(i_dim, o_dim, vb.pp(format!("layers.{i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }
}

impl Module for Mlp {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i + 1 < self.layers.len() {
                x = x.relu()?;
            }
        }
        Ok(x)
    }
}

/// Single-mask decoder head.
///
/// The iou-quality head of the full model is not built: only the first
/// (single-mask) output is ever used, so its hypernetwork is the only one
/// instantiated. All output tokens still take part in attention.
#[derive(Debug, Clone)]
pub struct MaskDecoder {
    cfg: DecoderConfig,
    iou_token: Tensor,
    mask_tokens: Tensor,
    upscale_conv1: ConvTranspose2d,
    upscale_norm: LayerNorm2d,
    upscale_conv2: ConvTranspose2d,
    hypernetwork: Mlp,
    transformer: TwoWayTransformer,
}

impl MaskDecoder {
    pub fn new(cfg: DecoderConfig, vb: VarBuilder) -> Result<Self> {
        let d = cfg.transformer_dim;
        let num_mask_tokens = cfg.num_multimask_outputs + 1;
        let init = candle_nn::Init::Randn {
            mean: 0.0,
            stdev: 1.0,
        };
        let iou_token = vb.pp("iou_token").get_with_hints((1, d), "weight", init)?;
        let mask_tokens = vb
            .pp("mask_tokens")
            .get_with_hints((num_mask_tokens, d), "weight", init)?;
        let up = ConvTranspose2dConfig {
            stride: 2,
            ..Default::default()
        };
        Ok(Self {
            cfg,
            iou_token,
            mask_tokens,
            upscale_conv1: candle_nn::conv_transpose2d(d, d / 4, 2, up, vb.pp("output_upscaling.0"))?,
            upscale_norm: LayerNorm2d::new(d / 4, 1e-6, vb.pp("output_upscaling.1"))?,
            upscale_conv2: candle_nn::conv_transpose2d(d / 4, d / 8, 2, up, vb.pp("output_upscaling.3"))?,
            hypernetwork: Mlp::new(d, d, d / 8, 3, vb.pp("output_hypernetworks_mlps.0"))?,
            transformer: TwoWayTransformer::new(&cfg, vb.pp("transformer"))?,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn dtype(&self) -> DType {
        self.iou_token.dtype()
    }

    /// Predicts single-mask logits of shape `[1, 1, 4H, 4W]` for one image.
    ///
    /// `image_embeddings`, `image_pe` and `dense_prompt` are `[1, C, H, W]`;
    /// `sparse_prompt` is `[1, N, C]`.
    pub fn forward(
        &self,
        image_embeddings: &Tensor,
        image_pe: &Tensor,
        sparse_prompt: &Tensor,
        dense_prompt: &Tensor,
    ) -> Result<Tensor> {
        let output_tokens = Tensor::cat(&[&self.iou_token, &self.mask_tokens], 0)?.unsqueeze(0)?;
        let tokens = Tensor::cat(&[&output_tokens, sparse_prompt], 1)?;

        let src = image_embeddings.broadcast_add(dense_prompt)?;
        let (b, c, h, w) = src.dims4()?;
        let (hs, src) = self.transformer.forward(&src, image_pe, &tokens)?;
        let mask_token_out = hs.i((.., 1))?;

        let src = src.transpose(1, 2)?.contiguous()?.reshape((b, c, h, w))?;
        let upscaled = self
            .upscale_conv1
            .forward(&src)?
            .apply(&self.upscale_norm)?
            .gelu_erf()?
            .apply(&self.upscale_conv2)?
            .gelu_erf()?;
        let (b, c, uh, uw) = upscaled.dims4()?;
        let hyper = self.hypernetwork.forward(&mask_token_out)?.unsqueeze(1)?;
        hyper
            .matmul(&upscaled.reshape((b, c, uh * uw))?)?
            .reshape((b, 1, uh, uw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use candle_nn::VarMap;

    #[test]
    fn output_is_four_times_the_embedding_grid() {
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        let dec = MaskDecoder::new(DecoderConfig::STUB, vb).unwrap();
        let dev = Device::Cpu;
        let emb = Tensor::randn(0f32, 1.0, (1, 32, 8, 8), &dev).unwrap();
        let pe = Tensor::randn(0f32, 1.0, (1, 32, 8, 8), &dev).unwrap();
        let sparse = Tensor::randn(0f32, 1.0, (1, 3, 32), &dev).unwrap();
        let dense = Tensor::zeros((1, 32, 8, 8), DType::F32, &dev).unwrap();
        let out = dec.forward(&emb, &pe, &sparse, &dense).unwrap();
        assert_eq!(out.dims(), &[1, 1, 32, 32]);
    }

    #[test]
    fn checkpoint_names_match_published_layout() {
        let vm = VarMap::new();
        let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
        MaskDecoder::new(DecoderConfig::STUB, vb).unwrap();
        let data = vm.data().lock().unwrap();
        for name in [
            "iou_token.weight",
            "mask_tokens.weight",
            "output_upscaling.0.weight",
            "output_upscaling.1.bias",
            "output_upscaling.3.weight",
            "output_hypernetworks_mlps.0.layers.2.weight",
            "transformer.layers.0.self_attn.q_proj.weight",
            "transformer.layers.1.cross_attn_image_to_token.out_proj.bias",
            "transformer.layers.0.mlp.lin1.weight",
            "transformer.final_attn_token_to_image.v_proj.weight",
            "transformer.norm_final_attn.weight",
        ] {
            assert!(data.contains_key(name), "missing {name}");
        }
        assert_eq!(data["mask_tokens.weight"].dims(), &[4, 32]);
        assert_eq!(
            data["transformer.layers.0.cross_attn_token_to_image.q_proj.weight"].dims(),
            &[16, 32]
        );
    }
}

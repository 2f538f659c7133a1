//! Five-block convolutional feature extractor.
//!
//! Each block is `conv 3×3 → ReLU → batchnorm → maxpool 2×2 → dropout`;
//! the second block has neither pooling nor dropout, so the total stride is
//! 16.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelParams;
use crate::error::{arg_err, shape_err, Result};
use crate::ops::{
    batchnorm, batchnorm_backward, conv2d, conv2d_backward, dropout, dropout_backward,
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, BatchNormCache, BatchNormParams,
    DropoutMask, Padding, PoolIndices,
};
use crate::rng::{he_normal, Rng};
use crate::tensor::Tensor;
use crate::Mode;

pub const NUM_BLOCKS: usize = 5;

/// Position of the nonlinearity relative to batchnorm inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockOrder {
    /// conv → ReLU → batchnorm.
    ReluBn,
    /// conv → batchnorm → ReLU.
    BnRelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub in_channels: usize,
    pub dropout_rate: f32,
    pub block_order: BlockOrder,
    pub layer2_has_pool: bool,
    pub layer2_has_dropout: bool,
    /// Network input `(height, width)`.
    pub input_size: (usize, usize),
    pub batchnorm: BatchNormParams,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            filters: alloc::vec![64, 128, 256, 512, 512],
            kernel: 3,
            in_channels: 1,
            dropout_rate: 0.5,
            block_order: BlockOrder::ReluBn,
            layer2_has_pool: false,
            layer2_has_dropout: false,
            input_size: (512, 512),
            batchnorm: BatchNormParams::default(),
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters.len() != NUM_BLOCKS {
            return Err(arg_err!("backbone needs {NUM_BLOCKS} filter counts, got {}", self.filters.len()));
        }
        if self.filters.contains(&0) || self.in_channels == 0 {
            return Err(arg_err!("backbone channel counts must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(arg_err!("backbone kernel must be odd, got {}", self.kernel));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(arg_err!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        let s = self.stride();
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(arg_err!("input size {h}x{w} is not a positive multiple of {s}"));
        }
        Ok(())
    }

    pub fn has_pool(&self, block: usize) -> bool {
        block != 1 || self.layer2_has_pool
    }

    pub fn has_dropout(&self, block: usize) -> bool {
        block != 1 || self.layer2_has_dropout
    }

    /// Total downsampling factor of the feature map.
    pub fn stride(&self) -> usize {
        (0..NUM_BLOCKS).filter(|&b| self.has_pool(b)).map(|_| 2).product()
    }

    pub fn out_channels(&self) -> usize {
        self.filters.last().copied().unwrap_or(0)
    }

    /// Feature map shape `(C, H, W)` for the configured input size.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let s = self.stride();
        (self.out_channels(), self.input_size.0 / s, self.input_size.1 / s)
    }

    pub fn param_count(&self) -> usize {
        let mut cin = self.in_channels;
        let mut n = 0;
        for &f in &self.filters {
            n += f * cin * self.kernel * self.kernel + f + 4 * f;
            cin = f;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub w: Tensor,
    pub b: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub blocks: Vec<ConvBlock>,
}

/// Intermediate values of one training-mode block, kept for backward.
#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor,
    /// Input of the ReLU.
    relu_in: Tensor,
    bn: BatchNormCache,
    pool: Option<PoolIndices>,
    mask: Option<DropoutMask>,
}

#[derive(Debug, Clone)]
pub struct BackboneCache {
    blocks: Vec<BlockCache>,
}

impl BackboneCache {
    pub fn record_pattern(&self, p: &mut crate::gradcheck::ActivationPattern) {
        for b in &self.blocks {
            p.relu(&b.relu_in);
            if let Some(idx) = &b.pool {
                p.winners(&idx.argmax);
            }
        }
    }
}

impl Backbone {
    /// He-initialized weights, zero biases, unit batchnorm scale.
    pub fn new(config: BackboneConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut cin = config.in_channels;
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        for &f in &config.filters {
            blocks.push(ConvBlock {
                w: he_normal(&[f, cin, k, k], cin * k * k, rng),
                b: Tensor::zeros(&[f]),
                gamma: Tensor::full(&[f], 1.0),
                beta: Tensor::zeros(&[f]),
                running_mean: Tensor::zeros(&[f]),
                running_var: Tensor::full(&[f], 1.0),
            });
            cin = f;
        }
        Ok(Self { config, blocks })
    }

    pub fn from_params(config: BackboneConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut cin = config.in_channels;
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        for (i, &f) in config.filters.iter().enumerate() {
            let n = i + 1;
            let get = |name: &str, shape: &[usize]| -> Result<Tensor> {
                let t = params.require(name)?;
                if t.shape() != shape {
                    return Err(crate::Error::Params(format!(
                        "{name} has shape {:?}, config expects {shape:?}",
                        t.shape()
                    )));
                }
                Ok(t.clone())
            };
            blocks.push(ConvBlock {
                w: get(&format!("backbone.conv{n}.w"), &[f, cin, k, k])?,
                b: get(&format!("backbone.conv{n}.b"), &[f])?,
                gamma: get(&format!("backbone.bn{n}.gamma"), &[f])?,
                beta: get(&format!("backbone.bn{n}.beta"), &[f])?,
                running_mean: get(&format!("backbone.bn{n}.rmean"), &[f])?,
                running_var: get(&format!("backbone.bn{n}.rvar"), &[f])?,
            });
            cin = f;
        }
        Ok(Self { config, blocks })
    }

    pub fn write_params(&self, params: &mut ModelParams) {
        for (i, bl) in self.blocks.iter().enumerate() {
            let n = i + 1;
            let mut put = |name: alloc::string::String, t: &Tensor| {
                let mut t = t.clone();
                t.clear_grad();
                params.insert(name, t);
            };
            put(format!("backbone.conv{n}.w"), &bl.w);
            put(format!("backbone.conv{n}.b"), &bl.b);
            put(format!("backbone.bn{n}.gamma"), &bl.gamma);
            put(format!("backbone.bn{n}.beta"), &bl.beta);
            put(format!("backbone.bn{n}.rmean"), &bl.running_mean);
            put(format!("backbone.bn{n}.rvar"), &bl.running_var);
        }
    }

    /// Learnable tensors (batchnorm running statistics excluded).
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(4 * NUM_BLOCKS);
        for bl in &mut self.blocks {
            out.push(&mut bl.w);
            out.push(&mut bl.b);
            out.push(&mut bl.gamma);
            out.push(&mut bl.beta);
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.dims3()?;
        let s = self.config.stride();
        if c != self.config.in_channels {
            return Err(shape_err!("backbone input has {c} channels, need {}", self.config.in_channels));
        }
        if h == 0 || w == 0 || h % s != 0 || w % s != 0 {
            return Err(shape_err!("backbone input {h}x{w} not divisible by {s}"));
        }
        Ok(())
    }

    /// Inference forward: dropout off, batchnorm on running statistics.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let cfg = &self.config;
        let mut cur = x.clone();
        for (i, bl) in self.blocks.iter().enumerate() {
            let z = conv2d(&cur, &bl.w, &bl.b, 1, Padding::Same)?;
            let mut rm = bl.running_mean.clone();
            let mut rv = bl.running_var.clone();
            let bn = |t: &Tensor, rm: &mut Tensor, rv: &mut Tensor| {
                batchnorm(t, &bl.gamma, &bl.beta, rm, rv, Mode::Infer, cfg.batchnorm).map(|r| r.0)
            };
            let a = match cfg.block_order {
                BlockOrder::ReluBn => bn(&relu(&z), &mut rm, &mut rv)?,
                BlockOrder::BnRelu => relu(&bn(&z, &mut rm, &mut rv)?),
            };
            cur = if cfg.has_pool(i) { maxpool2x2(&a)?.0 } else { a };
        }
        cur.ensure_finite("backbone")?;
        Ok(cur)
    }

    /// Training forward. Updates batchnorm running statistics and returns
    /// the cache needed by [`Backbone::backward`].
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, BackboneCache)> {
        self.check_input(x)?;
        let cfg = self.config.clone();
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(NUM_BLOCKS);
        for (i, bl) in self.blocks.iter_mut().enumerate() {
            let input = cur;
            let z = conv2d(&input, &bl.w, &bl.b, 1, Padding::Same)?;
            let (a, relu_in, bn) = match cfg.block_order {
                BlockOrder::ReluBn => {
                    let r = relu(&z);
                    let (n, c) = batchnorm(
                        &r,
                        &bl.gamma,
                        &bl.beta,
                        &mut bl.running_mean,
                        &mut bl.running_var,
                        Mode::Train,
                        cfg.batchnorm,
                    )?;
                    (n, z, c)
                }
                BlockOrder::BnRelu => {
                    let (n, c) = batchnorm(
                        &z,
                        &bl.gamma,
                        &bl.beta,
                        &mut bl.running_mean,
                        &mut bl.running_var,
                        Mode::Train,
                        cfg.batchnorm,
                    )?;
                    (relu(&n), n, c)
                }
            };
            let (p, pool) = if cfg.has_pool(i) {
                let (p, idx) = maxpool2x2(&a)?;
                (p, Some(idx))
            } else {
                (a, None)
            };
            let rate = if cfg.has_dropout(i) { cfg.dropout_rate } else { 0.0 };
            let (d, mask) = dropout(&p, rate, Mode::Train, rng)?;
            caches.push(BlockCache {
                input,
                relu_in,
                bn: bn.expect("train-mode batchnorm returns a cache"),
                pool,
                mask,
            });
            cur = d;
        }
        cur.ensure_finite("backbone")?;
        Ok((cur, BackboneCache { blocks: caches }))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Option<BackboneCache>)> {
        match mode {
            Mode::Infer => Ok((self.forward_infer(x)?, None)),
            Mode::Train => self.forward_train(x, rng).map(|(t, c)| (t, Some(c))),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BackboneCache, grad_out: &Tensor) -> Result<Tensor> {
        let order = self.config.block_order;
        let mut g = grad_out.clone();
        for (bl, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = dropout_backward(c.mask.as_ref(), &g)?;
            if let Some(idx) = &c.pool {
                g = maxpool2x2_backward(idx, &g)?;
            }
            let gz = match order {
                BlockOrder::ReluBn => {
                    let bg = batchnorm_backward(&c.bn, &bl.gamma, &g)?;
                    bl.gamma.accumulate_grad(bg.dgamma.data());
                    bl.beta.accumulate_grad(bg.dbeta.data());
                    relu_backward(&c.relu_in, &bg.dx)?
                }
                BlockOrder::BnRelu => {
                    let gr = relu_backward(&c.relu_in, &g)?;
                    let bg = batchnorm_backward(&c.bn, &bl.gamma, &gr)?;
                    bl.gamma.accumulate_grad(bg.dgamma.data());
                    bl.beta.accumulate_grad(bg.dbeta.data());
                    bg.dx
                }
            };
            let cg = conv2d_backward(&c.input, &bl.w, 1, Padding::Same, &gz)?;
            bl.w.accumulate_grad(cg.dw.data());
            bl.b.accumulate_grad(cg.db.data());
            g = cg.dx;
        }
        Ok(g)
    }
}

/// Freshly initialized backbone parameters under their checkpoint names.
pub fn build_backbone(cfg: &BackboneConfig, rng: &mut Rng) -> Result<ModelParams> {
    let b = Backbone::new(cfg.clone(), rng)?;
    let mut p = ModelParams::new();
    b.write_params(&mut p);
    Ok(p)
}

/// Inference-mode features of a single-channel image tensor `[1, H, W]`.
pub fn extract_features(x: &Tensor, backbone: &Backbone) -> Result<Tensor> {
    backbone.forward_infer(x)
}

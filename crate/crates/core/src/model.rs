//! The complete detector network and its checkpoint mapping.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig};
use crate::checkpoint::ModelParams;
use crate::detector::{DetectorConfig, Head, Rpn};
use crate::error::Result;
use crate::image::GrayImage;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub detector: DetectorConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.detector.anchors.validate()?;
        if self.detector.anchors.stride != self.backbone.stride() {
            return Err(crate::error::arg_err!(
                "anchor stride {} differs from backbone stride {}",
                self.detector.anchors.stride,
                self.backbone.stride()
            ));
        }
        let h = &self.detector.head;
        if h.hidden == 0 || h.pool_size == 0 || self.detector.rpn_channels == 0 {
            return Err(crate::error::arg_err!("head and rpn sizes must be positive"));
        }
        if !(0.0..1.0).contains(&h.dropout_rate) {
            return Err(crate::error::arg_err!("head dropout rate {} outside [0, 1)", h.dropout_rate));
        }
        Ok(())
    }

    pub fn head_in_features(&self) -> usize {
        let p = self.detector.head.pool_size;
        self.backbone.out_channels() * p * p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub rpn: Rpn,
    pub head: Head,
}

/// Which parameters an optimizer step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    BackboneAndRpn,
    All,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let backbone = Backbone::new(config.backbone.clone(), rng)?;
        let c = config.backbone.out_channels();
        let rpn = Rpn::new(c, config.detector.rpn_channels, config.detector.anchors.per_cell(), rng);
        let head = Head::new(config.detector.head, config.head_in_features(), rng);
        Ok(Self {
            config,
            backbone,
            rpn,
            head,
        })
    }

    pub fn from_params(config: ModelConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        let backbone = Backbone::from_params(config.backbone.clone(), params)?;
        let c = config.backbone.out_channels();
        let rpn = Rpn::from_params(params, c, config.detector.rpn_channels, config.detector.anchors.per_cell())?;
        let head = Head::from_params(params, config.detector.head, config.head_in_features())?;
        let expected = {
            let mut p = ModelParams::new();
            backbone.write_params(&mut p);
            rpn.write_params(&mut p);
            head.write_params(&mut p);
            p.len()
        };
        if params.len() != expected {
            return Err(crate::Error::Params(alloc::format!(
                "checkpoint has {} tensors, model expects {expected}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            backbone,
            rpn,
            head,
        })
    }

    pub fn to_params(&self) -> ModelParams {
        let mut p = ModelParams::new();
        self.backbone.write_params(&mut p);
        self.rpn.write_params(&mut p);
        self.head.write_params(&mut p);
        p
    }

    pub fn stride(&self) -> usize {
        self.config.backbone.stride()
    }

    pub fn params_mut(&mut self, group: ParamGroup) -> Vec<&mut Tensor> {
        let mut v = self.backbone.trainable_mut();
        v.extend(self.rpn.trainable_mut());
        if group == ParamGroup::All {
            v.extend(self.head.trainable_mut());
        }
        v
    }

    pub fn zero_grads(&mut self) {
        for t in self.params_mut(ParamGroup::All) {
            t.clear_grad();
        }
    }
}

/// Network input tensor `[1, H, W]` with intensities scaled to `[0, 1]`.
pub fn image_tensor(img: &GrayImage) -> Tensor {
    let data = img.pixels().iter().map(|&v| v / 255.0).collect();
    Tensor::new(&[1, img.height(), img.width()], data).expect("image buffer matches its size")
}

//! Target assignment, losses, augmentation and the training loop.

mod augment;
mod loss;
mod targets;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use augment::{augment, flip_horizontal, rotate90};
pub use loss::{head_loss, rpn_loss, LossParts};
pub use targets::{assign_head_targets, assign_rpn_targets, AnchorLabel, HeadTarget, RpnTargets};

use crate::detector::{generate_anchors, propose, roi_pool, roi_pool_backward, Annotation, BBox};
use crate::error::{arg_err, Error, Result};
use crate::image::GrayImage;
use crate::model::{image_tensor, Model, ParamGroup};
use crate::optim::{OptimKind, OptimState};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;
use crate::Mode;

/// One training image with its ground truth, already at network input
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: GrayImage,
    pub annotations: Vec<Annotation>,
}

impl TrainSample {
    pub fn validate(&self) -> Result<()> {
        if self.annotations.is_empty() {
            return Err(arg_err!("training sample without annotations"));
        }
        let (w, h) = (self.image.width() as f64, self.image.height() as f64);
        for a in &self.annotations {
            if !a.bbox.is_valid() || !a.bbox.inside(w, h) {
                return Err(arg_err!("annotation box {:?} outside the {w}x{h} image", a.bbox));
            }
        }
        Ok(())
    }
}

/// Preprocesses a raw image and maps its annotations into the output
/// frame. Boxes are clipped to the output image; boxes that vanish are
/// dropped.
pub fn prepare_sample(
    image: &GrayImage,
    annotations: &[Annotation],
    pre: &crate::imgproc::Preprocessor,
) -> Result<(TrainSample, crate::imgproc::Preprocessed)> {
    let p = pre.run(image)?;
    let (w, h) = (p.image.width() as f64, p.image.height() as f64);
    let annotations = annotations
        .iter()
        .filter_map(|a| {
            let b = BBox::from_array(p.box_to_output(a.bbox.to_array())).clip(w, h);
            (b.width() >= 1.0 && b.height() >= 1.0).then_some(Annotation {
                bbox: b,
                class: a.class,
            })
        })
        .collect();
    Ok((
        TrainSample {
            image: p.image.clone(),
            annotations,
        },
        p,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub sgd_momentum: f32,
    pub rpn_optimizer: OptimKind,
    pub joint_optimizer: OptimKind,
    /// Epochs of the backbone + RPN phase; `None` uses half of `epochs`.
    pub rpn_phase_epochs: Option<usize>,
    /// Skip the RPN phase and train everything with the joint optimizer.
    pub joint_only: bool,
    /// Learning rate of the joint phase; `None` reuses `lr`.
    pub joint_lr: Option<f32>,
    pub rpn_pos_iou: f64,
    pub rpn_neg_iou: f64,
    pub rpn_batch: usize,
    pub head_batch: usize,
    pub fg_fraction: f64,
    pub head_fg_iou: f64,
    pub head_bg_iou: (f64, f64),
    pub augment: bool,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-5,
            sgd_momentum: 0.9,
            rpn_optimizer: OptimKind::Adam,
            joint_optimizer: OptimKind::SgdMomentum,
            rpn_phase_epochs: None,
            joint_only: false,
            joint_lr: None,
            rpn_pos_iou: 0.7,
            rpn_neg_iou: 0.3,
            rpn_batch: 256,
            head_batch: 64,
            fg_fraction: 0.5,
            head_fg_iou: 0.5,
            head_bg_iou: (0.0, 0.5),
            augment: true,
            checkpoint_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.rpn_neg_iou && self.rpn_neg_iou < self.rpn_pos_iou && self.rpn_pos_iou <= 1.0) {
            return Err(arg_err!("need 0 <= rpn_neg_iou < rpn_pos_iou <= 1"));
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction < 1.0) {
            return Err(arg_err!("fg_fraction must lie in (0, 1)"));
        }
        if !(self.lr >= 0.0) || !(self.joint_lr.unwrap_or(0.0) >= 0.0) {
            return Err(arg_err!("learning rates must be non-negative"));
        }
        if self.rpn_batch == 0 || self.head_batch == 0 {
            return Err(arg_err!("batch sizes must be positive"));
        }
        let (lo, hi) = self.head_bg_iou;
        if !(0.0 <= lo && lo <= hi && hi <= self.head_fg_iou) {
            return Err(arg_err!("need 0 <= bg_lo <= bg_hi <= head_fg_iou"));
        }
        Ok(())
    }

    /// Epochs spent in the backbone + RPN phase.
    pub fn rpn_epochs(&self) -> usize {
        if self.joint_only {
            0
        } else {
            self.rpn_phase_epochs.unwrap_or(self.epochs / 2).min(self.epochs)
        }
    }

    pub fn phase_of(&self, epoch: usize) -> Phase {
        if epoch <= self.rpn_epochs() {
            Phase::Rpn
        } else {
            Phase::Joint
        }
    }

    fn optimizer(&self, phase: Phase) -> OptimState {
        let (kind, lr) = match phase {
            Phase::Rpn => (self.rpn_optimizer, self.lr),
            Phase::Joint => (self.joint_optimizer, self.joint_lr.unwrap_or(self.lr)),
        };
        match kind {
            OptimKind::Adam => OptimState::adam(lr),
            OptimKind::SgdMomentum => OptimState::sgd(lr, self.sgd_momentum),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Backbone and RPN only.
    Rpn,
    /// Whole model.
    Joint,
}

/// Per-sample loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub head_cls: f64,
    pub head_reg: f64,
}

impl StepLosses {
    pub fn total(&self) -> f64 {
        self.rpn_cls + self.rpn_reg + self.head_cls + self.head_reg
    }

    fn add(&mut self, o: &StepLosses) {
        self.rpn_cls += o.rpn_cls;
        self.rpn_reg += o.rpn_reg;
        self.head_cls += o.head_cls;
        self.head_reg += o.head_reg;
    }

    fn scale(&mut self, s: f64) {
        self.rpn_cls *= s;
        self.rpn_reg *= s;
        self.head_cls *= s;
        self.head_reg *= s;
    }
}

/// Randomness used by one forward/backward pass.
pub struct StepRngs<'a> {
    /// Anchor and ROI subsampling.
    pub sample: &'a mut Rng,
    /// Dropout masks.
    pub dropout: &'a mut Rng,
}

/// Forward pass with losses; when `backward` is set the gradients of the
/// RPN terms (and of the head terms when `train_head`) are accumulated into
/// the model's gradient buffers.
pub fn forward_losses(
    model: &mut Model,
    sample: &TrainSample,
    cfg: &TrainConfig,
    mode: Mode,
    train_head: bool,
    backward: bool,
    rngs: StepRngs<'_>,
) -> Result<StepLosses> {
    let x = image_tensor(&sample.image);
    let (feats, bcache) = model.backbone.forward(&x, mode, rngs.dropout)?;
    let (_, fh, fw) = feats.dims3()?;
    let dcfg = model.config.detector.clone();
    let anchors = generate_anchors(fh, fw, &dcfg.anchors);
    let (rpn_out, rcache) = model.rpn.forward(&feats)?;
    let gts: Vec<BBox> = sample.annotations.iter().map(|a| a.bbox).collect();
    let rt = assign_rpn_targets(
        &anchors,
        &gts,
        cfg.rpn_pos_iou,
        cfg.rpn_neg_iou,
        cfg.rpn_batch,
        cfg.fg_fraction,
        rngs.sample,
    )?;
    let rl = rpn_loss(&rpn_out, &anchors, &rt)?;

    let pc = &dcfg.proposals;
    let props = propose(&rpn_out, &anchors, pc.pre_nms_n, pc.post_nms_train, pc.nms_thresh, pc.min_size)?;
    let rois: Vec<BBox> = props.iter().map(|p| p.bbox).collect();
    let stride = model.stride();
    let ps = model.head.config.pool_size;
    let mut targets = Vec::new();
    let mut pooled = Vec::new();
    let mut indices = Vec::new();
    for t in assign_head_targets(
        &rois,
        &sample.annotations,
        cfg.head_fg_iou,
        cfg.head_bg_iou,
        cfg.head_batch,
        cfg.fg_fraction,
        true,
        rngs.sample,
    ) {
        match roi_pool(&feats, &t.roi, stride, ps) {
            Ok((p, idx)) => {
                pooled.extend_from_slice(p.data());
                indices.push(idx);
                targets.push(t);
            }
            Err(Error::RoiOutside) => {}
            Err(e) => return Err(e),
        }
    }
    let mut losses = StepLosses {
        rpn_cls: rl.cls,
        rpn_reg: rl.reg,
        ..Default::default()
    };
    let mut head_grad = None;
    if !targets.is_empty() {
        let xin = Tensor::new(&[targets.len(), model.head.in_features()], pooled)?;
        let (hout, hcache) = model.head.forward(&xin, mode, rngs.dropout)?;
        let hl = head_loss(&hout, &targets)?;
        losses.head_cls = hl.cls;
        losses.head_reg = hl.reg;
        if backward && train_head {
            head_grad = Some(model.head.backward(&hcache, &hl.grad_logits, &hl.grad_deltas)?);
        }
    }
    if backward {
        let mut dfeat = model.rpn.backward(&rcache, &rl.grad_logits, &rl.grad_deltas)?;
        if let Some(g) = head_grad {
            let row = model.head.in_features();
            for (r, idx) in indices.iter().enumerate() {
                roi_pool_backward(idx, &g.data()[r * row..(r + 1) * row], dfeat.data_mut())?;
            }
        }
        let bc = bcache.ok_or_else(|| arg_err!("backward requires a training-mode forward"))?;
        model.backbone.backward(&bc, &dfeat)?;
    }
    Ok(losses)
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub head_cls: f64,
    pub head_reg: f64,
    pub total: f64,
    /// Mean inference-mode total loss on the validation set.
    pub val_total: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,rpn_cls,rpn_reg,head_cls,head_reg,total,val_total";

    pub fn csv_row(&self) -> String {
        let val = self.val_total.map_or(String::new(), |v| alloc::format!("{v:.6}"));
        alloc::format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.epoch,
            self.rpn_cls,
            self.rpn_reg,
            self.head_cls,
            self.head_reg,
            self.total,
            val
        )
    }
}

/// Mean inference-mode loss over `samples`, with a sampling stream fixed
/// by `seed` so repeated evaluations are comparable.
pub fn evaluate_loss(model: &mut Model, samples: &[TrainSample], cfg: &TrainConfig, seed: u64) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let mut srng = rng::stream(seed, "val-sample");
    let mut drng = rng::stream(seed, "val-dropout");
    let mut sum = 0.0;
    for s in samples {
        let l = forward_losses(
            model,
            s,
            cfg,
            Mode::Infer,
            false,
            false,
            StepRngs {
                sample: &mut srng,
                dropout: &mut drng,
            },
        )?;
        sum += l.total();
    }
    Ok(Some(sum / samples.len() as f64))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Trains `model` on `train` for `cfg.epochs` epochs, one image per step.
///
/// The first phase updates backbone and RPN with `rpn_optimizer`; the
/// second updates every parameter with `joint_optimizer`. Head losses are
/// logged in both phases. `observer` sees every epoch after its update
/// (checkpointing hooks in here).
pub fn train_with(
    mut model: Model,
    train: &[TrainSample],
    val: &[TrainSample],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochLog, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in train.iter().chain(val) {
        s.validate()?;
    }
    let mut shuffle = rng::stream(cfg.seed, "shuffle");
    let mut aug = rng::stream(cfg.seed, "augment");
    let mut srng = rng::stream(cfg.seed, "sample");
    let mut drng = rng::stream(cfg.seed, "dropout");
    let mut opt: Option<(Phase, OptimState)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let phase = cfg.phase_of(epoch);
        if opt.as_ref().map(|o| o.0) != Some(phase) {
            opt = Some((phase, cfg.optimizer(phase)));
        }
        let state = &mut opt.as_mut().expect("set above").1;
        let group = match phase {
            Phase::Rpn => ParamGroup::BackboneAndRpn,
            Phase::Joint => ParamGroup::All,
        };
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle);
        let mut sum = StepLosses::default();
        for &i in &order {
            let s = if cfg.augment { augment(&train[i], &mut aug) } else { train[i].clone() };
            model.zero_grads();
            let l = forward_losses(
                &mut model,
                &s,
                cfg,
                Mode::Train,
                phase == Phase::Joint,
                true,
                StepRngs {
                    sample: &mut srng,
                    dropout: &mut drng,
                },
            )?;
            sum.add(&l);
            state.step(&mut model.params_mut(group))?;
        }
        model.zero_grads();
        sum.scale(1.0 / train.len() as f64);
        let val_total = evaluate_loss(&mut model, val, cfg, cfg.seed)?;
        let entry = EpochLog {
            epoch,
            phase,
            rpn_cls: sum.rpn_cls,
            rpn_reg: sum.rpn_reg,
            head_cls: sum.head_cls,
            head_reg: sum.head_reg,
            total: sum.total(),
            val_total,
        };
        observer(&entry, &model)?;
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

pub fn train(model: Model, train_set: &[TrainSample], val: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train_set, val, cfg, &mut |_, _| Ok(()))
}

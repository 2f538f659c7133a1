use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelParams;
use crate::error::{shape_err, Result};
use crate::ops::{
    dense_rows, dense_rows_backward, dropout, dropout_backward, relu, relu_backward, softmax, DropoutMask,
};
use crate::rng::{he_normal, normal_tensor, Rng};
use crate::tensor::Tensor;
use crate::Mode;

/// Background, benign, malignant.
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden: usize,
    pub dropout_rate: f32,
    /// Side of the square ROI pooling grid.
    pub pool_size: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: 1024,
            dropout_rate: 0.5,
            pool_size: 5,
        }
    }
}

/// Two hidden fully connected layers feeding a 3-way classifier and
/// per-class box regressors (class `k` at columns `4k..4k + 4`).
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub config: HeadConfig,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
    pub cls_w: Tensor,
    pub cls_b: Tensor,
    pub reg_w: Tensor,
    pub reg_b: Tensor,
}

#[derive(Debug, Clone)]
pub struct HeadOutput {
    /// Class probabilities `[R, 3]`.
    pub probs: Tensor,
    /// Box deltas `[R, 12]`.
    pub deltas: Tensor,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    x: Tensor,
    pre1: Tensor,
    mask1: Option<DropoutMask>,
    h1: Tensor,
    pre2: Tensor,
    mask2: Option<DropoutMask>,
    h2: Tensor,
}

impl HeadCache {
    pub fn record_pattern(&self, p: &mut crate::gradcheck::ActivationPattern) {
        p.relu(&self.pre1);
        p.relu(&self.pre2);
    }
}

const NAMES: [&str; 8] = [
    "head.fc1.w",
    "head.fc1.b",
    "head.fc2.w",
    "head.fc2.b",
    "head.cls.w",
    "head.cls.b",
    "head.reg.w",
    "head.reg.b",
];

impl Head {
    pub fn new(config: HeadConfig, in_features: usize, rng: &mut Rng) -> Self {
        let h = config.hidden;
        Self {
            config,
            fc1_w: he_normal(&[h, in_features], in_features, rng),
            fc1_b: Tensor::zeros(&[h]),
            fc2_w: he_normal(&[h, h], h, rng),
            fc2_b: Tensor::zeros(&[h]),
            cls_w: normal_tensor(&[NUM_CLASSES, h], 0.01, rng),
            cls_b: Tensor::zeros(&[NUM_CLASSES]),
            reg_w: normal_tensor(&[4 * NUM_CLASSES, h], 0.001, rng),
            reg_b: Tensor::zeros(&[4 * NUM_CLASSES]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.fc1_w.shape()[1]
    }

    fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
            &self.cls_w,
            &self.cls_b,
            &self.reg_w,
            &self.reg_b,
        ]
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
            &mut self.cls_w,
            &mut self.cls_b,
            &mut self.reg_w,
            &mut self.reg_b,
        ]
    }

    pub fn write_params(&self, params: &mut ModelParams) {
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            let mut t = t.clone();
            t.clear_grad();
            params.insert(*name, t);
        }
    }

    pub fn from_params(params: &ModelParams, config: HeadConfig, in_features: usize) -> Result<Self> {
        let h = config.hidden;
        let shapes: [&[usize]; 8] = [
            &[h, in_features],
            &[h],
            &[h, h],
            &[h],
            &[NUM_CLASSES, h],
            &[NUM_CLASSES],
            &[4 * NUM_CLASSES, h],
            &[4 * NUM_CLASSES],
        ];
        let mut ts = Vec::with_capacity(8);
        for (name, shape) in NAMES.iter().zip(shapes) {
            let t = params.require(name)?;
            if t.shape() != shape {
                return Err(crate::Error::Params(alloc::format!(
                    "{name} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
            ts.push(t.clone());
        }
        let mut it = ts.into_iter();
        let mut next = || it.next().expect("eight tensors");
        Ok(Self {
            config,
            fc1_w: next(),
            fc1_b: next(),
            fc2_w: next(),
            fc2_b: next(),
            cls_w: next(),
            cls_b: next(),
            reg_w: next(),
            reg_b: next(),
        })
    }

    /// Forward over a batch of flattened pooled ROIs `[R, C·P·P]`.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(HeadOutput, HeadCache)> {
        let rate = self.config.dropout_rate;
        let pre1 = dense_rows(x, &self.fc1_w, &self.fc1_b)?;
        let (h1, mask1) = dropout(&relu(&pre1), rate, mode, rng)?;
        let pre2 = dense_rows(&h1, &self.fc2_w, &self.fc2_b)?;
        let (h2, mask2) = dropout(&relu(&pre2), rate, mode, rng)?;
        let logits = dense_rows(&h2, &self.cls_w, &self.cls_b)?;
        let deltas = dense_rows(&h2, &self.reg_w, &self.reg_b)?;
        let r = logits.shape()[0];
        let mut probs = Vec::with_capacity(r * NUM_CLASSES);
        for row in logits.data().chunks(NUM_CLASSES) {
            probs.extend(softmax(row));
        }
        let probs = Tensor::new(&[r, NUM_CLASSES], probs)?;
        probs.ensure_finite("head")?;
        deltas.ensure_finite("head")?;
        Ok((
            HeadOutput { probs, deltas },
            HeadCache {
                x: x.clone(),
                pre1,
                mask1,
                h1,
                pre2,
                mask2,
                h2,
            },
        ))
    }

    /// Accumulates parameter gradients given gradients on the class
    /// logits `[R, 3]` and deltas `[R, 12]`; returns the input gradient.
    pub fn backward(&mut self, cache: &HeadCache, grad_logits: &Tensor, grad_deltas: &Tensor) -> Result<Tensor> {
        let gc = dense_rows_backward(&cache.h2, &self.cls_w, grad_logits)?;
        let gr = dense_rows_backward(&cache.h2, &self.reg_w, grad_deltas)?;
        self.cls_w.accumulate_grad(gc.dw.data());
        self.cls_b.accumulate_grad(gc.db.data());
        self.reg_w.accumulate_grad(gr.dw.data());
        self.reg_b.accumulate_grad(gr.db.data());
        let dh2: Vec<f32> = gc.dx.data().iter().zip(gr.dx.data()).map(|(a, b)| a + b).collect();
        let dh2 = Tensor::new(cache.h2.shape(), dh2)?;
        let d = relu_backward(&cache.pre2, &dropout_backward(cache.mask2.as_ref(), &dh2)?)?;
        let g2 = dense_rows_backward(&cache.h1, &self.fc2_w, &d)?;
        self.fc2_w.accumulate_grad(g2.dw.data());
        self.fc2_b.accumulate_grad(g2.db.data());
        let d = relu_backward(&cache.pre1, &dropout_backward(cache.mask1.as_ref(), &g2.dx)?)?;
        let g1 = dense_rows_backward(&cache.x, &self.fc1_w, &d)?;
        self.fc1_w.accumulate_grad(g1.dw.data());
        self.fc1_b.accumulate_grad(g1.db.data());
        Ok(g1.dx)
    }

    /// Single-ROI convenience: pooled `[C, P, P]` to `([3], [3, 4])`.
    pub fn forward_one(&self, pooled: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
        if pooled.len() != self.in_features() {
            return Err(shape_err!("pooled roi has {} values, head expects {}", pooled.len(), self.in_features()));
        }
        let x = Tensor::new(&[1, pooled.len()], pooled.data().to_vec())?;
        let (out, _) = self.forward(&x, mode, rng)?;
        Ok((
            out.probs.reshape(&[NUM_CLASSES])?,
            out.deltas.reshape(&[NUM_CLASSES, 4])?,
        ))
    }
}

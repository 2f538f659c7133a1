//! Breast-mass detection core.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std`; file formats, image codecs and the command line live
//! in the companion `massdet` crate.
//!
//! The pipeline stages are:
//!
//! 1. **imgproc** – denoising filter bank, CLAHE, OTSU + morphology breast
//!    region extraction, letterbox resize.
//! 2. **backbone** – five 3×3 convolution blocks producing a stride-16
//!    feature map.
//! 3. **detector** – anchors, RPN, proposals with NMS, 5×5 ROI max-pooling
//!    and the benign/malignant/background head.
//! 4. **training** – target assignment, losses, augmentation and the
//!    two-phase (Adam then SGD) training loop.
//! 5. **evaluation** – IoU matching, threshold tables, confusion metrics,
//!    ROC/AUC and report rendering.
//! 6. **dataio** – annotation schema, seeded splits and a synthetic
//!    mammogram generator.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backbone;
pub mod checkpoint;
pub mod dataio;
pub mod detector;
pub mod error;
pub mod gradcheck;
pub mod evaluation;
pub mod image;
pub mod imgproc;
pub mod math;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use image::{BinaryMask, GrayImage};
pub use tensor::Tensor;

/// Forward-pass behaviour switch shared by batchnorm, dropout and the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

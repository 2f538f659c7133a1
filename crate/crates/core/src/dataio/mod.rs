//! Annotation schema, seeded dataset splits and the synthetic mammogram
//! generator.

mod annotation;
mod split;
mod synth;

pub use annotation::{AnnotationFile, Shape};
pub use split::{split_dataset, split_dataset_stratified, split_sizes, SplitManifest, DEFAULT_RATIOS};
pub use synth::{generate_synthetic_dataset, render_sample, SynthConfig, SynthMass, SynthSample};

pub use crate::detector::{Annotation, BBox, Class};

//! Mammogram preprocessing: denoising, contrast enhancement and breast
//! region extraction.
//!
//! All filters use reflect-101 borders (`dcb|abcd|cba`).

mod clahe;
mod filters;
mod morphology;
mod pipeline;
mod region;
mod resize;
mod threshold;

pub use clahe::{clahe, clahe_tile_luts, ClaheConfig};
pub use filters::{
    bilateral_filter, gaussian_filter, gaussian_kernel, median_filter, mse, select_denoiser,
    FilterConfig, DenoiseSelection,
};
pub use morphology::{fill_holes, largest_component, morphology, MorphOp};
pub use pipeline::{PreprocessConfig, Preprocessed, Preprocessor};
pub use region::{extract_breast_region, BreastRegion, CropBox, RegionConfig};
pub use resize::{letterbox, resize_bilinear, Letterbox};
pub use threshold::{otsu_threshold, threshold_mask, OtsuResult};

/// Maps an index onto `[0, n)` by mirror reflection without repeating the
/// edge sample.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

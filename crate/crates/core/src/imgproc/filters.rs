use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::reflect;
use crate::error::{arg_err, shape_err, Result};
use crate::image::GrayImage;
use crate::math;

/// One entry of the denoising filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterConfig {
    Identity,
    Gaussian { k: usize, sigma: f32 },
    Median { k: usize },
    Bilateral { k: usize, sigma_space: f32, sigma_range: f32 },
}

impl FilterConfig {
    pub fn gaussian(k: usize) -> Self {
        FilterConfig::Gaussian {
            k,
            sigma: default_sigma(k),
        }
    }

    pub fn median(k: usize) -> Self {
        FilterConfig::Median { k }
    }

    pub fn bilateral(k: usize) -> Self {
        FilterConfig::Bilateral {
            k,
            sigma_space: default_sigma(k),
            sigma_range: 30.0,
        }
    }

    /// Gaussian, median and bilateral at 3×3 and 5×5.
    pub fn default_bank() -> Vec<Self> {
        vec![
            Self::gaussian(3),
            Self::gaussian(5),
            Self::median(3),
            Self::median(5),
            Self::bilateral(3),
            Self::bilateral(5),
        ]
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match *self {
            FilterConfig::Identity => Ok(img.clone()),
            FilterConfig::Gaussian { k, sigma } => gaussian_filter(img, k, sigma),
            FilterConfig::Median { k } => median_filter(img, k),
            FilterConfig::Bilateral {
                k,
                sigma_space,
                sigma_range,
            } => bilateral_filter(img, k, sigma_space, sigma_range),
        }
    }

    /// Short label such as `median3`.
    pub fn label(&self) -> alloc::string::String {
        match self {
            FilterConfig::Identity => "identity".into(),
            FilterConfig::Gaussian { k, .. } => alloc::format!("gaussian{k}"),
            FilterConfig::Median { k } => alloc::format!("median{k}"),
            FilterConfig::Bilateral { k, .. } => alloc::format!("bilateral{k}"),
        }
    }
}

fn default_sigma(k: usize) -> f32 {
    if k <= 3 {
        1.0
    } else {
        1.5
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(arg_err!("filter size must be odd and positive, got {k}"));
    }
    Ok(())
}

/// Normalized 1-D Gaussian weights of odd length `k`.
pub fn gaussian_kernel(k: usize, sigma: f32) -> Result<Vec<f64>> {
    check_kernel(k)?;
    if !(sigma > 0.0) {
        return Err(arg_err!("gaussian sigma must be > 0, got {sigma}"));
    }
    let r = (k / 2) as isize;
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-r..=r).map(|i| math::exp(-((i * i) as f64) / s2)).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Separable Gaussian blur.
pub fn gaussian_filter(img: &GrayImage, k: usize, sigma: f32) -> Result<GrayImage> {
    let kern = gaussian_kernel(k, sigma)?;
    let (w, h) = (img.width(), img.height());
    let r = (k / 2) as isize;
    let src = img.pixels();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let acc: f64 = kern
                .iter()
                .enumerate()
                .map(|(i, &kv)| kv * row[reflect(x as isize + i as isize - r, w)] as f64)
                .sum();
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let acc: f64 = kern
                .iter()
                .enumerate()
                .map(|(i, &kv)| kv * tmp[reflect(y as isize + i as isize - r, h) * w + x] as f64)
                .sum();
            out[y * w + x] = acc as f32;
        }
    }
    GrayImage::from_clamped(w, h, out)
}

/// Median of each `k×k` neighbourhood.
pub fn median_filter(img: &GrayImage, k: usize) -> Result<GrayImage> {
    check_kernel(k)?;
    let (w, h) = (img.width(), img.height());
    let r = (k / 2) as isize;
    let src = img.pixels();
    let mut window = Vec::with_capacity(k * k);
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            window.clear();
            for dy in -r..=r {
                let sy = reflect(y as isize + dy, h);
                for dx in -r..=r {
                    window.push(src[sy * w + reflect(x as isize + dx, w)]);
                }
            }
            window.sort_unstable_by(f32::total_cmp);
            out[y * w + x] = window[window.len() / 2];
        }
    }
    GrayImage::new(w, h, out)
}

/// Edge-preserving blur: spatial Gaussian times intensity-difference
/// Gaussian, normalized per pixel. `sigma_range = ∞` reduces it to a plain
/// Gaussian blur.
pub fn bilateral_filter(
    img: &GrayImage,
    k: usize,
    sigma_space: f32,
    sigma_range: f32,
) -> Result<GrayImage> {
    check_kernel(k)?;
    if !(sigma_space > 0.0) || !(sigma_range > 0.0) {
        return Err(arg_err!("bilateral sigmas must be > 0"));
    }
    let (w, h) = (img.width(), img.height());
    let r = (k / 2) as isize;
    let ss2 = 2.0 * sigma_space as f64 * sigma_space as f64;
    let sr2 = 2.0 * sigma_range as f64 * sigma_range as f64;
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| math::exp(-((dx * dx + dy * dy) as f64) / ss2)))
        .collect();
    let src = img.pixels();
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let center = src[y * w + x] as f64;
            let (mut num, mut den) = (0.0f64, 0.0f64);
            let mut si = 0;
            for dy in -r..=r {
                let sy = reflect(y as isize + dy, h);
                for dx in -r..=r {
                    let v = src[sy * w + reflect(x as isize + dx, w)] as f64;
                    let d = v - center;
                    let wgt = spatial[si] * math::exp(-(d * d) / sr2);
                    num += wgt * v;
                    den += wgt;
                    si += 1;
                }
            }
            out[y * w + x] = (num / den) as f32;
        }
    }
    GrayImage::from_clamped(w, h, out)
}

/// Mean squared pixel difference.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(shape_err!(
            "mse of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

#[derive(Debug, Clone)]
pub struct DenoiseSelection {
    pub config: FilterConfig,
    pub image: GrayImage,
    /// MSE of every candidate against the reference, in candidate order;
    /// empty when no reference was available.
    pub scores: Vec<f64>,
}

/// Picks the candidate whose output is closest (MSE) to `reference`; ties go
/// to the earlier candidate. Without a reference the 3×3 median is used.
pub fn select_denoiser(
    noisy: &GrayImage,
    reference: Option<&GrayImage>,
    candidates: &[FilterConfig],
) -> Result<DenoiseSelection> {
    let Some(reference) = reference else {
        let config = FilterConfig::median(3);
        return Ok(DenoiseSelection {
            image: config.apply(noisy)?,
            config,
            scores: Vec::new(),
        });
    };
    if candidates.is_empty() {
        return Err(arg_err!("no denoising candidates"));
    }
    let mut best: Option<(usize, f64, GrayImage)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let out = c.apply(noisy)?;
        let s = mse(&out, reference)?;
        scores.push(s);
        if best.as_ref().is_none_or(|(_, bs, _)| s < *bs) {
            best = Some((i, s, out));
        }
    }
    let (i, _, image) = best.expect("non-empty candidates");
    Ok(DenoiseSelection {
        config: candidates[i],
        image,
        scores,
    })
}

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::math;
use crate::tensor::Tensor;
use crate::Mode;

/// Running-statistics momentum and variance guard.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchNormParams {
    /// Weight of the old running value in the exponential moving average.
    pub momentum: f32,
    pub eps: f32,
}

impl Default for BatchNormParams {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            eps: 1e-5,
        }
    }
}

/// Saved by a training-mode forward for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

/// Per-channel batch normalization over the spatial axes of `[C, H, W]`.
///
/// Train mode normalizes with the batch statistics (biased variance) and
/// folds them into the running statistics; infer mode reads only the
/// running statistics.
pub fn batchnorm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    mode: Mode,
    params: BatchNormParams,
) -> Result<(Tensor, Option<BatchNormCache>)> {
    let (c, h, w) = x.dims3()?;
    let n = h * w;
    if n == 0 {
        return Err(shape_err!("batchnorm over zero-size spatial extent"));
    }
    if !(params.eps > 0.0) {
        return Err(arg_err!("batchnorm eps must be > 0"));
    }
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", &*running_mean),
        ("running_var", &*running_var),
    ] {
        if t.len() != c {
            return Err(shape_err!("batchnorm {name} has {} entries, need {c}", t.len()));
        }
    }
    let src = x.data();
    let mut out = vec![0.0f32; src.len()];
    match mode {
        Mode::Infer => {
            for ch in 0..c {
                let inv = 1.0 / math::sqrt(running_var.data()[ch] as f64 + params.eps as f64);
                let (m, g, b) = (
                    running_mean.data()[ch] as f64,
                    gamma.data()[ch] as f64,
                    beta.data()[ch] as f64,
                );
                for (o, &v) in out[ch * n..(ch + 1) * n].iter_mut().zip(&src[ch * n..(ch + 1) * n]) {
                    *o = ((v as f64 - m) * inv * g + b) as f32;
                }
            }
            Ok((Tensor::new(x.shape(), out)?, None))
        }
        Mode::Train => {
            let mut xhat = vec![0.0f32; src.len()];
            let mut inv_std = vec![0.0f32; c];
            let mom = params.momentum;
            for ch in 0..c {
                let plane = &src[ch * n..(ch + 1) * n];
                let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
                let var = plane.iter().map(|&v| { let d = v as f64 - mean; d * d }).sum::<f64>() / n as f64;
                let inv = 1.0 / math::sqrt(var + params.eps as f64);
                inv_std[ch] = inv as f32;
                let (g, b) = (gamma.data()[ch] as f64, beta.data()[ch] as f64);
                for i in 0..n {
                    let xh = (plane[i] as f64 - mean) * inv;
                    xhat[ch * n + i] = xh as f32;
                    out[ch * n + i] = (xh * g + b) as f32;
                }
                let rm = &mut running_mean.data_mut()[ch];
                *rm = mom * *rm + (1.0 - mom) * mean as f32;
                let rv = &mut running_var.data_mut()[ch];
                *rv = mom * *rv + (1.0 - mom) * var as f32;
            }
            Ok((
                Tensor::new(x.shape(), out)?,
                Some(BatchNormCache {
                    xhat,
                    inv_std,
                    shape: [c, h, w],
                }),
            ))
        }
    }
}

/// Backward of a training-mode batchnorm.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<BatchNormGrads> {
    let [c, h, w] = cache.shape;
    let n = h * w;
    if grad_out.shape() != cache.shape {
        return Err(shape_err!("batchnorm grad {:?} vs {:?}", grad_out.shape(), cache.shape));
    }
    let dy = grad_out.data();
    let mut dx = vec![0.0f32; dy.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ch in 0..c {
        let dyp = &dy[ch * n..(ch + 1) * n];
        let xh = &cache.xhat[ch * n..(ch + 1) * n];
        let sum_dy: f64 = dyp.iter().map(|&v| v as f64).sum();
        let sum_dy_xh: f64 = dyp.iter().zip(xh).map(|(&a, &b)| a as f64 * b as f64).sum();
        dgamma[ch] = sum_dy_xh as f32;
        dbeta[ch] = sum_dy as f32;
        let g = gamma.data()[ch] as f64;
        let k = g * cache.inv_std[ch] as f64 / n as f64;
        for i in 0..n {
            dx[ch * n + i] =
                (k * (n as f64 * dyp[i] as f64 - sum_dy - xh[i] as f64 * sum_dy_xh)) as f32;
        }
    }
    Ok(BatchNormGrads {
        dx: Tensor::new(&cache.shape, dx)?,
        dgamma: Tensor::new(&[c], dgamma)?,
        dbeta: Tensor::new(&[c], dbeta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(c: usize) -> (Tensor, Tensor, Tensor, Tensor) {
        (
            Tensor::full(&[c], 1.0),
            Tensor::zeros(&[c]),
            Tensor::zeros(&[c]),
            Tensor::full(&[c], 1.0),
        )
    }

    #[test]
    fn standardized_input_is_a_fixed_point() {
        let x = Tensor::new(&[1, 2, 2], std::vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let (g, b, mut rm, mut rv) = stats(1);
        let (y, _) =
            batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, Default::default()).unwrap();
        for (a, e) in y.data().iter().zip(x.data()) {
            assert!((a - e).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::full(&[2, 3, 3], 7.5);
        let (g, _, mut rm, mut rv) = stats(2);
        let b = Tensor::new(&[2], std::vec![0.25, -2.0]).unwrap();
        let (y, _) =
            batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, Default::default()).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 0.25));
        assert!(y.data()[9..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn running_stats_follow_ema_and_drive_infer_mode() {
        let x = Tensor::new(&[1, 1, 4], std::vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let (g, b, mut rm, mut rv) = stats(1);
        batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, Default::default()).unwrap();
        // mean 3, biased var 3.5
        assert!((rm.data()[0] - 0.3).abs() < 1e-6);
        assert!((rv.data()[0] - (0.9 + 0.35)).abs() < 1e-6);
        let (y, cache) =
            batchnorm(&x, &g, &b, &mut rm.clone(), &mut rv.clone(), Mode::Infer, Default::default())
                .unwrap();
        assert!(cache.is_none());
        let want = (1.0 - 0.3) / (1.25f32 + 1e-5).sqrt();
        assert!((y.data()[0] - want).abs() < 1e-5);
    }

    #[test]
    fn empty_spatial_extent_is_an_error() {
        let x = Tensor::zeros(&[1, 0, 3]);
        let (g, b, mut rm, mut rv) = stats(1);
        assert!(batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, Default::default()).is_err());
    }
}

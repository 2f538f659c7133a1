use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{arg_err, shape_err, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Mode;

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(shape_err!("relu grad {:?} vs input {:?}", grad_out.shape(), x.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), data)
}

/// Per-element multipliers applied by a training-mode dropout: 0 for dropped
/// elements, `1 / (1 - rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f32>);

/// Inverted dropout. Infer mode and `rate == 0` return the input unchanged
/// and no mask.
pub fn dropout(
    x: &Tensor,
    rate: f32,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor, Option<DropoutMask>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(arg_err!("dropout rate {rate} outside [0, 1)"));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = (0..x.len())
        .map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, Some(DropoutMask(mask))))
}

pub fn dropout_backward(mask: Option<&DropoutMask>, grad_out: &Tensor) -> Result<Tensor> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(DropoutMask(m)) => {
            if m.len() != grad_out.len() {
                return Err(shape_err!("dropout mask length {} vs grad {}", m.len(), grad_out.len()));
            }
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::new(grad_out.shape(), data)
        }
    }
}

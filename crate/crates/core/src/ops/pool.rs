use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Flat input index chosen by each output cell of a max-pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    pub input_shape: [usize; 3],
    pub argmax: Vec<u32>,
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties go to the first element in row-major order.
pub fn maxpool2x2(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let (c, h, w) = x.dims3()?;
    if h < 2 || w < 2 {
        return Err(shape_err!("maxpool needs H,W >= 2, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for idx in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::new(&[c, oh, ow], out)?,
        PoolIndices {
            input_shape: [c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward(idx: &PoolIndices, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != idx.argmax.len() {
        return Err(shape_err!(
            "pool grad has {} entries, expected {}",
            grad_out.len(),
            idx.argmax.len()
        ));
    }
    let mut dx = Tensor::zeros(&idx.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in idx.argmax.iter().zip(grad_out.data()) {
        d[i as usize] += g;
    }
    Ok(dx)
}

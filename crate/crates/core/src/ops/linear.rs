use alloc::vec;
use alloc::vec::Vec;

use super::gemm::sgemm;
use crate::error::{shape_err, Result};
use crate::math;
use crate::tensor::Tensor;

fn dense_dims(w: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let (m, n) = match w.shape()[..] {
        [m, n] => (m, n),
        _ => return Err(shape_err!("dense weight must be rank 2, got {:?}", w.shape())),
    };
    if b.len() != m {
        return Err(shape_err!("dense bias has {} entries, need {m}", b.len()));
    }
    Ok((m, n))
}

/// `W · x + b` for a single vector.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(w, b)?;
    if x.len() != n {
        return Err(shape_err!("dense input has {} entries, need {n}", x.len()));
    }
    let mut out = b.data().to_vec();
    sgemm(m, n, 1, w.data(), false, x.data(), false, 1.0, &mut out);
    Tensor::new(&[m], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let rows = Tensor::new(&[1, x.len()], x.data().to_vec())?;
    let g = Tensor::new(&[1, grad_out.len()], grad_out.data().to_vec())?;
    let mut grads = dense_rows_backward(&rows, w, &g)?;
    grads.dx = grads.dx.reshape(&[x.len()])?;
    Ok(grads)
}

/// Row-batched dense layer: `X[r, n] · Wᵀ + b → [r, m]`.
pub fn dense_rows(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(w, b)?;
    let r = match x.shape()[..] {
        [r, k] if k == n => r,
        _ => return Err(shape_err!("dense rows input {:?} vs weight {:?}", x.shape(), w.shape())),
    };
    let mut out = vec![0.0f32; r * m];
    for row in out.chunks_mut(m) {
        row.copy_from_slice(b.data());
    }
    sgemm(r, n, m, x.data(), false, w.data(), true, 1.0, &mut out);
    Tensor::new(&[r, m], out)
}

pub fn dense_rows_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (m, n) = match w.shape()[..] {
        [m, n] => (m, n),
        _ => return Err(shape_err!("dense weight must be rank 2")),
    };
    let r = x.len() / n.max(1);
    if x.len() != r * n || grad_out.len() != r * m {
        return Err(shape_err!(
            "dense backward: x {:?}, w {:?}, grad {:?}",
            x.shape(),
            w.shape(),
            grad_out.shape()
        ));
    }
    let dy = grad_out.data();
    let mut dx = vec![0.0f32; r * n];
    sgemm(r, m, n, dy, false, w.data(), false, 0.0, &mut dx);
    let mut dw = vec![0.0f32; m * n];
    sgemm(m, r, n, dy, true, x.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0f64; m];
    for row in dy.chunks(m) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v as f64;
        }
    }
    Ok(DenseGrads {
        dx: Tensor::new(x.shape(), dx)?,
        dw: Tensor::new(&[m, n], dw)?,
        db: Tensor::new(&[m], db.into_iter().map(|v| v as f32).collect())?,
    })
}

/// Numerically stable softmax of a logit slice.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&v| math::exp((v - max) as f64)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| (e / sum) as f32).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g − ⟨p, g⟩)`.
pub fn softmax_backward(probs: &[f32], grad_out: &[f32]) -> Vec<f32> {
    let dot: f64 = probs.iter().zip(grad_out).map(|(&p, &g)| p as f64 * g as f64).sum();
    probs
        .iter()
        .zip(grad_out)
        .map(|(&p, &g)| (p as f64 * (g as f64 - dot)) as f32)
        .collect()
}

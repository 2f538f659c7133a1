use alloc::vec;
use alloc::vec::Vec;

use super::gemm::sgemm;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output is `ceil(H / stride)`; zero padding split top/left first.
    Same,
    /// No padding; output is `(H - k) / stride + 1`.
    Valid,
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl Geom {
    fn new(x: &Tensor, w: &Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let (c_in, h, wd) = x.dims3()?;
        let (c_out, wc_in, kh, kw) = match w.shape()[..] {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(shape_err!("conv weight must be rank 4, got {:?}", w.shape())),
        };
        if wc_in != c_in {
            return Err(shape_err!(
                "input has {c_in} channels but kernel expects {wc_in}"
            ));
        }
        if stride == 0 {
            return Err(arg_err!("conv stride must be >= 1"));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(arg_err!("same padding needs odd kernel, got {kh}x{kw}"));
                }
                let oh = h.div_ceil(stride);
                let ow = wd.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(wd);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if kh > h || kw > wd {
                    return Err(shape_err!("kernel {kh}x{kw} larger than input {h}x{wd}"));
                }
                ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
            }
        };
        Ok(Self {
            c_in,
            h,
            w: wd,
            c_out,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source row for output row `oy` and kernel row `ky`, if inside the image.
    #[inline]
    fn src_y(&self, oy: usize, ky: usize) -> Option<usize> {
        (oy * self.stride + ky).checked_sub(self.pad_top).filter(|&y| y < self.h)
    }

    #[inline]
    fn src_x(&self, ox: usize, kx: usize) -> Option<usize> {
        (ox * self.stride + kx).checked_sub(self.pad_left).filter(|&x| x < self.w)
    }
}

/// Unfolds `x` into a `[C_in·kH·kW, out_h·out_w]` column matrix.
fn im2col(x: &[f32], g: &Geom) -> Vec<f32> {
    let n = g.n();
    let mut cols = vec![0.0f32; g.k() * n];
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let Some(sy) = g.src_y(oy, ky) else { continue };
                    let src = &plane[sy * g.w..(sy + 1) * g.w];
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        if let Some(sx) = g.src_x(ox, kx) {
                            *d = src[sx];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds a column matrix back onto the input grid, summing overlaps.
fn col2im(cols: &[f32], g: &Geom) -> Vec<f32> {
    let n = g.n();
    let mut x = vec![0.0f32; g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let Some(sy) = g.src_y(oy, ky) else { continue };
                    let srow = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    let drow = &mut plane[sy * g.w..(sy + 1) * g.w];
                    for (ox, v) in srow.iter().enumerate() {
                        if let Some(sx) = g.src_x(ox, kx) {
                            drow[sx] += *v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2-D cross-correlation (no kernel flip) with zero padding.
pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let g = Geom::new(x, w, stride, padding)?;
    if b.len() != g.c_out {
        return Err(shape_err!("bias has {} entries, need {}", b.len(), g.c_out));
    }
    let n = g.n();
    let mut out = vec![0.0f32; g.c_out * n];
    for (co, row) in out.chunks_mut(n).enumerate() {
        row.fill(b.data()[co]);
    }
    if g.kh == 1 && g.kw == 1 && g.stride == 1 {
        // 1×1 stride-1 kernels read the input directly.
        sgemm(g.c_out, g.k(), n, w.data(), false, x.data(), false, 1.0, &mut out);
    } else {
        let cols = im2col(x.data(), &g);
        sgemm(g.c_out, g.k(), n, w.data(), false, &cols, false, 1.0, &mut out);
    }
    Tensor::new(&[g.c_out, g.out_h, g.out_w], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

/// Gradients of a conv2d given the upstream gradient of its output.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let g = Geom::new(x, w, stride, padding)?;
    if grad_out.shape() != [g.c_out, g.out_h, g.out_w] {
        return Err(shape_err!(
            "grad_out {:?} does not match conv output {:?}",
            grad_out.shape(),
            [g.c_out, g.out_h, g.out_w]
        ));
    }
    let n = g.n();
    let k = g.k();
    let dy = grad_out.data();
    let direct = g.kh == 1 && g.kw == 1 && g.stride == 1;
    let cols_owned;
    let cols: &[f32] = if direct {
        x.data()
    } else {
        cols_owned = im2col(x.data(), &g);
        &cols_owned
    };

    let mut dw = vec![0.0f32; g.c_out * k];
    sgemm(g.c_out, n, k, dy, false, cols, true, 0.0, &mut dw);

    let db: Vec<f32> = dy
        .chunks(n)
        .map(|r| r.iter().map(|&v| v as f64).sum::<f64>() as f32)
        .collect();

    let mut dcols = vec![0.0f32; k * n];
    sgemm(k, g.c_out, n, w.data(), true, dy, false, 0.0, &mut dcols);
    let dx = if direct { dcols } else { col2im(&dcols, &g) };

    Ok(ConvGrads {
        dx: Tensor::new(&[g.c_in, g.h, g.w], dx)?,
        dw: Tensor::new(w.shape(), dw)?,
        db: Tensor::new(&[g.c_out], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::new(&[1, 3, 4], (0..12).map(|v| v as f32 - 5.0).collect()).unwrap();
        let w = Tensor::full(&[1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b, 1, Padding::Same).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_window_sums() {
        let x = Tensor::full(&[1, 5, 5], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros(&[1]), 1, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5]);
        assert_eq!(y.data()[2 * 5 + 2], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[2], 6.0);
    }

    #[test]
    fn same_padding_with_stride_uses_ceil() {
        let x = Tensor::zeros(&[2, 7, 9]);
        let w = Tensor::zeros(&[3, 2, 3, 3]);
        let y = conv2d(&x, &w, &Tensor::zeros(&[3]), 2, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[3, 4, 5]);
        let y = conv2d(&x, &w, &Tensor::zeros(&[3]), 1, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[3, 5, 7]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d(&x, &w, &Tensor::zeros(&[1]), 1, Padding::Same),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn even_kernel_rejected_for_same_padding() {
        let x = Tensor::zeros(&[1, 4, 4]);
        let w = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(matches!(
            conv2d(&x, &w, &Tensor::zeros(&[1]), 1, Padding::Same),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn direct_loop_agrees_with_im2col_path() {
        // Cross-correlation against a plain nested loop, stride 2, same padding.
        let (ci, h, wd, co) = (2, 6, 5, 3);
        let x = Tensor::new(
            &[ci, h, wd],
            (0..ci * h * wd).map(|i| ((i * 37) % 11) as f32 - 5.0).collect(),
        )
        .unwrap();
        let w = Tensor::new(
            &[co, ci, 3, 3],
            (0..co * ci * 9).map(|i| ((i * 13) % 7) as f32 - 3.0).collect(),
        )
        .unwrap();
        let b = Tensor::new(&[co], std::vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv2d(&x, &w, &b, 2, Padding::Same).unwrap();
        let (oh, ow) = (3, 3);
        // total padding is (oh-1)*2+3-h = 1 → top 0, left (2*2+3-5)/2 = 1
        let (pt, pl) = (0isize, 1isize);
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = (oy * 2 + ky) as isize - pt;
                                let sx = (ox * 2 + kx) as isize - pl;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[(c * h + sy as usize) * wd + sx as usize]
                                    * w.data()[((o * ci + c) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                    assert_eq!(y.data()[(o * oh + oy) * ow + ox], acc);
                }
            }
        }
    }
}

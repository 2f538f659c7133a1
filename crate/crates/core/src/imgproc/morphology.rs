use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::image::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erode then dilate.
    Open,
    /// Dilate then erode.
    Close,
}

/// Square `k×k` structuring element, windows clipped at the image border
/// (outside pixels neither erode nor dilate).
pub fn morphology(mask: &BinaryMask, op: MorphOp, k: usize) -> Result<BinaryMask> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(arg_err!("structuring element must be odd, got {k}"));
    }
    let r = k / 2;
    Ok(match op {
        MorphOp::Erode => sweep(mask, r, false),
        MorphOp::Dilate => sweep(mask, r, true),
        MorphOp::Open => sweep(&sweep(mask, r, false), r, true),
        MorphOp::Close => sweep(&sweep(mask, r, true), r, false),
    })
}

/// Separable square min (`dilate == false`) or max filter.
fn sweep(mask: &BinaryMask, r: usize, dilate: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.bits();
    fn reduce(dilate: bool, mut it: impl Iterator<Item = bool>) -> bool {
        if dilate {
            it.any(|b| b)
        } else {
            it.all(|b| b)
        }
    }
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
            tmp[y * w + x] = reduce(dilate, row[lo..=hi].iter().copied());
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = reduce(dilate, (lo..=hi).map(|yy| tmp[yy * w + x]));
        }
    }
    BinaryMask::new(w, h, out).expect("same dims")
}

/// 8-connected component labels (0 = background) and component sizes,
/// labelled in row-major order of each component's first pixel.
pub(crate) fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if bits[q] && labels[q] == 0 {
                        labels[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 8-connected foreground component; among equal
/// sizes the one whose first pixel comes earliest in row-major order wins.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (labels, sizes) = label_components(mask);
    let mut best: Option<(u32, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((i as u32 + 1, s));
        }
    }
    let bits = match best {
        None => vec![false; labels.len()],
        Some((id, _)) => labels.iter().map(|&l| l == id).collect(),
    };
    BinaryMask::new(mask.width(), mask.height(), bits).expect("same dims")
}

/// Sets every background pixel that is not 4-connected to the image
/// border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut outside = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h)
        .filter(|&p| {
            let (x, y) = (p % w, p / w);
            !bits[p] && (x == 0 || y == 0 || x == w - 1 || y == h - 1)
        })
        .collect();
    for &p in &stack {
        outside[p] = true;
    }
    while let Some(p) = stack.pop() {
        let (x, y) = (p % w, p / w);
        let mut visit = |q: usize| {
            if !bits[q] && !outside[q] {
                outside[q] = true;
                stack.push(q);
            }
        };
        if x > 0 {
            visit(p - 1);
        }
        if x + 1 < w {
            visit(p + 1);
        }
        if y > 0 {
            visit(p - w);
        }
        if y + 1 < h {
            visit(p + w);
        }
    }
    BinaryMask::new(w, h, outside.iter().map(|&o| !o).collect()).expect("same dims")
}

use alloc::vec::Vec;

use rand::Rng as _;

use super::TrainSample;
use crate::detector::{Annotation, BBox};
use crate::image::GrayImage;
use crate::rng::Rng;

/// Mirror about the vertical axis: `x → W − x`.
pub fn flip_horizontal(s: &TrainSample) -> TrainSample {
    let img = &s.image;
    let (w, h) = (img.width(), img.height());
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            px.push(img.get(w - 1 - x, y));
        }
    }
    let wf = w as f64;
    TrainSample {
        image: GrayImage::new(w, h, px).expect("same size as source"),
        annotations: s
            .annotations
            .iter()
            .map(|a| Annotation {
                bbox: BBox {
                    x1: wf - a.bbox.x2,
                    y1: a.bbox.y1,
                    x2: wf - a.bbox.x1,
                    y2: a.bbox.y2,
                },
                class: a.class,
            })
            .collect(),
    }
}

/// Quarter turn counter-clockwise: `(x, y) → (y, W − x)` on an image whose
/// width and height swap.
pub fn rotate90(s: &TrainSample) -> TrainSample {
    let img = &s.image;
    let (w, h) = (img.width(), img.height());
    let (nw, nh) = (h, w);
    let mut px = Vec::with_capacity(w * h);
    for ny in 0..nh {
        for nx in 0..nw {
            px.push(img.get(w - 1 - ny, nx));
        }
    }
    let wf = w as f64;
    TrainSample {
        image: GrayImage::new(nw, nh, px).expect("same pixel count as source"),
        annotations: s
            .annotations
            .iter()
            .map(|a| Annotation {
                bbox: BBox {
                    x1: a.bbox.y1,
                    y1: wf - a.bbox.x2,
                    x2: a.bbox.y2,
                    y2: wf - a.bbox.x1,
                },
                class: a.class,
            })
            .collect(),
    }
}

/// Random horizontal flip (p = 0.5) followed by a random multiple of 90°.
pub fn augment(s: &TrainSample, rng: &mut Rng) -> TrainSample {
    let flip = rng.random_bool(0.5);
    let turns = rng.random_range(0..4u32);
    let mut out = if flip { flip_horizontal(s) } else { s.clone() };
    for _ in 0..turns {
        out = rotate90(&out);
    }
    out
}

//! Independent reference implementations checked against the library.

use massdet_core::detector::{iou, roi_pool, BBox};
use massdet_core::evaluation::roc_auc;
use massdet_core::imgproc::otsu_threshold;
use massdet_core::rng;
use massdet_core::{GrayImage, Tensor};
use rand::Rng as _;

/// Outcome of one oracle comparison over a batch of random cases.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub name: &'static str,
    pub cases: usize,
    pub mismatches: Vec<String>,
}

impl Oracle {
    pub fn passes(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn describe(&self) -> String {
        match self.mismatches.first() {
            None => format!("{}: {} cases agree", self.name, self.cases),
            Some(m) => format!("{}: {}/{} cases differ, first: {m}", self.name, self.mismatches.len(), self.cases),
        }
    }
}

/// Smallest threshold maximizing the between-class variance, compared as
/// exact fractions over the raw pixels.
pub fn exhaustive_otsu(pixels: &[u8]) -> u8 {
    let n = pixels.len() as u128;
    let total: u128 = pixels.iter().map(|&p| p as u128).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        let n0 = pixels.iter().filter(|&&p| p <= t).count() as u128;
        let s0: u128 = pixels.iter().filter(|&&p| p <= t).map(|&p| p as u128).sum();
        let (n1, s1) = (n - n0, total - s0);
        // variance ∝ (n0·s1 − n1·s0)² / (n0·n1); empty classes score zero
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0, 1)
        } else {
            let d = (n0 * s1).abs_diff(n1 * s0);
            (d * d, n0 * n1)
        };
        if best.is_none_or(|(_, bn, bd)| num * bd > bn * den) {
            best = Some((t, num, den));
        }
    }
    best.expect("256 candidates").0
}

pub fn otsu_oracle(images: usize, seed: u64) -> Oracle {
    let mut r = rng::stream(seed, "oracle/otsu");
    let mut mismatches = Vec::new();
    for i in 0..images {
        let (w, h) = (r.random_range(8..48), r.random_range(8..48));
        let (m0, m1) = (r.random_range(0.0..128.0), r.random_range(96.0..255.0));
        let spread = r.random_range(2.0..40.0);
        let frac = r.random_range(0.1..0.9);
        let px: Vec<u8> = (0..w * h)
            .map(|_| {
                let m = if r.random_bool(frac) { m1 } else { m0 };
                (m + spread * (r.random::<f64>() - 0.5) * 2.0).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        let img = GrayImage::from_u8(w, h, &px).unwrap();
        let got = otsu_threshold(&img);
        let want = exhaustive_otsu(&px);
        if got.degenerate || got.threshold != want {
            mismatches.push(format!("image {i}: library {} oracle {want}", got.threshold));
        }
    }
    Oracle { name: "otsu vs exhaustive search", cases: images, mismatches }
}

/// IoU by counting the unit pixels covered by integer boxes.
pub fn pixel_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
    let inside = |bx: [i32; 4], x: i32, y: i32| x >= bx[0] && x < bx[2] && y >= bx[1] && y < bx[3];
    let (lo_x, lo_y) = (a[0].min(b[0]), a[1].min(b[1]));
    let (hi_x, hi_y) = (a[2].max(b[2]), a[3].max(b[3]));
    let (mut inter, mut union) = (0u32, 0u32);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u32;
            union += (ia || ib) as u32;
        }
    }
    inter as f64 / union as f64
}

pub fn iou_oracle(pairs: usize, seed: u64) -> Oracle {
    let mut r = rng::stream(seed, "oracle/iou");
    let random_box = |r: &mut massdet_core::rng::Rng| {
        let (x, y) = (r.random_range(0..24), r.random_range(0..24));
        [x, y, x + r.random_range(1..12), y + r.random_range(1..12)]
    };
    let mut mismatches = Vec::new();
    for i in 0..pairs {
        let (a, b) = (random_box(&mut r), random_box(&mut r));
        let f = |v: [i32; 4]| BBox::from_array(v.map(f64::from));
        let got = iou(&f(a), &f(b));
        let want = pixel_iou(a, b);
        if got != want || iou(&f(b), &f(a)) != want {
            mismatches.push(format!("pair {i} {a:?} {b:?}: library {got} oracle {want}"));
        }
    }
    Oracle { name: "iou vs pixel enumeration", cases: pairs, mismatches }
}

/// Mann-Whitney U statistic normalized by the number of pairs; ties count
/// one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut u, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                u += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    u / pairs
}

pub fn auc_oracle(instances: usize, seed: u64) -> Oracle {
    let mut r = rng::stream(seed, "oracle/auc");
    let mut mismatches = Vec::new();
    for i in 0..instances {
        let n = r.random_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse quantization on some instances forces tied scores
        let levels = if i % 2 == 0 { 8.0 } else { 1e6 };
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s: f64 = r.random::<f64>() * 0.7 + if l { 0.3 } else { 0.0 };
                (s * levels).floor() / levels
            })
            .collect();
        let got = roc_auc(&scores, &labels).auc.unwrap();
        let want = mann_whitney_auc(&scores, &labels);
        if (got - want).abs() >= 1e-9 {
            mismatches.push(format!("instance {i}: trapezoid {got} mann-whitney {want}"));
        }
    }
    Oracle { name: "auc vs mann-whitney", cases: instances, mismatches }
}

/// Max over every feature cell whose bin interval contains it, with bins
/// laid out over the cells the roi touches.
pub fn brute_roi_pool(features: &Tensor, roi: &BBox, stride: usize, out: usize) -> Vec<f32> {
    let (c, h, w) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let s = stride as f64;
    let cells = |lo: f64, hi: f64, n: usize| {
        let a = (lo / s).floor().clamp(0.0, n as f64) as usize;
        let b = (hi / s).ceil().clamp(0.0, n as f64) as usize;
        (a, b)
    };
    let (x0, x1) = cells(roi.x1, roi.x2, w);
    let (y0, y1) = cells(roi.y1, roi.y2, h);
    let in_bin = |k: usize, len: usize, cell: usize| {
        let lo = (k * len) as f64 / out as f64;
        let hi = ((k + 1) * len) as f64 / out as f64;
        cell as f64 >= lo.floor() && (cell as f64) < hi.ceil()
    };
    let mut res = vec![f32::NEG_INFINITY; c * out * out];
    for ch in 0..c {
        for y in y0..y1 {
            for x in x0..x1 {
                let v = features.data()[(ch * h + y) * w + x];
                for by in 0..out {
                    for bx in 0..out {
                        if in_bin(by, y1 - y0, y - y0) && in_bin(bx, x1 - x0, x - x0) {
                            let o = (ch * out + by) * out + bx;
                            res[o] = res[o].max(v);
                        }
                    }
                }
            }
        }
    }
    res
}

pub fn roi_pool_oracle(rois: usize, seed: u64) -> Oracle {
    let mut r = rng::stream(seed, "oracle/roi_pool");
    let (c, h, w, stride, out) = (3, 12, 14, 16, 5);
    let data: Vec<f32> = (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect();
    let features = Tensor::new(&[c, h, w], data).unwrap();
    let mut mismatches = Vec::new();
    for i in 0..rois {
        let x1 = r.random_range(0.0..(w * stride) as f64 - 2.0);
        let y1 = r.random_range(0.0..(h * stride) as f64 - 2.0);
        let x2 = r.random_range(x1 + 1.0..(w * stride) as f64 + 8.0);
        let y2 = r.random_range(y1 + 1.0..(h * stride) as f64 + 8.0);
        let roi = BBox { x1, y1, x2, y2 };
        let (got, _) = roi_pool(&features, &roi, stride, out).unwrap();
        if got.shape() != [c, out, out] || got.data() != brute_roi_pool(&features, &roi, stride, out) {
            mismatches.push(format!("roi {i} {roi:?}"));
        }
    }
    Oracle { name: "roi pool vs brute-force bin max", cases: rois, mismatches }
}

/// The four oracle batches at their acceptance sizes.
pub fn oracle_suite() -> Vec<Oracle> {
    vec![otsu_oracle(50, 1), iou_oracle(1000, 2), auc_oracle(200, 3), roi_pool_oracle(100, 4)]
}

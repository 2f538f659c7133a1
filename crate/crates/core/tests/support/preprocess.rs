//! Behavioural checks of the preprocessing stages on synthetic inputs.

use std::collections::VecDeque;

use massdet_core::dataio::{render_sample, SynthConfig};
use massdet_core::imgproc::{bilateral_filter, extract_breast_region, gaussian_filter, median_filter, RegionConfig};
use massdet_core::rng;
use massdet_core::{BinaryMask, GrayImage};
use rand::Rng as _;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// 8-connected foreground components.
pub fn count_components(m: &BinaryMask) -> usize {
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if !m.bits()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits()[j] && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
    }
    count
}

/// Breast extraction over `n` synthetic images with label blocks: no
/// mask pixel may fall on a block, the mask must be one component and it
/// must keep every mass centre.
pub fn distractor_removal(n: usize, seed: u64) -> Check {
    let cfg = SynthConfig::default();
    let (mut blocks, mut failures) = (0, Vec::new());
    for i in 0..n {
        let s = render_sample(i, &cfg, seed).unwrap();
        let region = extract_breast_region(&s.image, &RegionConfig::default()).unwrap();
        let m = &region.mask;
        blocks += s.distractors.len();
        let leaked: usize = s
            .distractors
            .iter()
            .map(|b| {
                let (x0, y0, x1, y1) = (b.x1 as usize, b.y1 as usize, b.x2 as usize, b.y2 as usize);
                (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y))).filter(|&(x, y)| m.get(x, y)).count()
            })
            .sum();
        let components = count_components(m);
        let lost = s.masses.iter().filter(|ms| !m.get(ms.cx as usize, ms.cy as usize)).count();
        if leaked > 0 || components != 1 || lost > 0 {
            failures.push(format!("{}: {leaked} block pixels kept, {components} components, {lost} masses lost", s.id));
        }
    }
    Check {
        name: "breast extraction drops label blocks",
        pass: failures.is_empty() && blocks > 0,
        detail: match failures.first() {
            None => format!("{blocks} blocks removed over {n} images, every mask a single component"),
            Some(f) => format!("{} of {n} images fail, first {f}", failures.len()),
        },
    }
}

fn mse(a: &GrayImage, b: &[f32]) -> f64 {
    a.pixels().iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>() / b.len() as f64
}

/// Noisy vertical step edge: the bilateral output must stay closer to the
/// clean step than the Gaussian output at the same kernel size.
pub fn bilateral_preserves_edges(seed: u64) -> Check {
    let mut r = rng::stream(seed, "check/step");
    let (w, h) = (48, 32);
    let clean: Vec<f32> = (0..w * h).map(|i| if i % w < w / 2 { 40.0 } else { 200.0 }).collect();
    let noisy: Vec<f32> = clean.iter().map(|&v| v + r.random_range(-6.0f32..6.0).round()).collect();
    let img = GrayImage::new(w, h, noisy).unwrap();
    let mut rows = Vec::new();
    let mut pass = true;
    for k in [3, 5] {
        let sigma = 0.3 * ((k as f32 - 1.0) * 0.5 - 1.0) + 0.8;
        let g = mse(&gaussian_filter(&img, k, sigma).unwrap(), &clean);
        let b = mse(&bilateral_filter(&img, k, sigma, 30.0).unwrap(), &clean);
        pass &= b < g;
        rows.push(format!("k={k}: bilateral mse {b:.2} gaussian {g:.2}"));
    }
    Check { name: "bilateral beats gaussian on a step edge", pass, detail: rows.join(", ") }
}

/// Salt-and-pepper impulses at least three pixels apart on flat
/// backgrounds: a 3×3 median must restore every image exactly.
pub fn median_removes_impulses(images: usize, seed: u64) -> Check {
    let mut r = rng::stream(seed, "check/impulses");
    let (w, h) = (40, 40);
    let (mut total, mut survivors, mut altered) = (0, 0, 0);
    for _ in 0..images {
        let bg = r.random_range(20..230) as f32;
        let mut img = GrayImage::filled(w, h, bg).unwrap();
        let mut placed: Vec<(usize, usize)> = Vec::new();
        for _ in 0..60 {
            let (x, y) = (r.random_range(0..w), r.random_range(0..h));
            if placed.iter().all(|&(px, py)| px.abs_diff(x).max(py.abs_diff(y)) > 2) {
                img.set(x, y, if r.random_bool(0.5) { 0.0 } else { 255.0 });
                placed.push((x, y));
            }
        }
        total += placed.len();
        let out = median_filter(&img, 3).unwrap();
        survivors += placed.iter().filter(|&&(x, y)| out.get(x, y) != bg).count();
        altered += out.pixels().iter().filter(|&&v| v != bg).count();
    }
    Check {
        name: "3x3 median removes isolated impulses",
        pass: altered == 0 && total > 0,
        detail: format!("{survivors} of {total} impulses survive, {altered} pixels differ from the background"),
    }
}

pub fn preprocess_suite() -> Vec<Check> {
    vec![distractor_removal(100, 42), bilateral_preserves_edges(5), median_removes_impulses(20, 6)]
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::detector::{Annotation, BBox, Class};
use crate::error::{arg_err, Result};
use crate::image::GrayImage;
use crate::math;
use crate::rng::{self, Rng};

const TAU: f64 = core::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Image `(width, height)`.
    pub canvas: (usize, usize),
    pub min_masses: usize,
    pub max_masses: usize,
    /// Mass radius range in pixels at a 256-pixel canvas; scaled with the
    /// canvas.
    pub radius: (f64, f64),
    /// Bright label blocks placed in the background.
    pub distractors: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            canvas: (256, 256),
            min_masses: 1,
            max_masses: 3,
            radius: (9.0, 16.0),
            distractors: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.canvas;
        if w < 64 || h < 64 {
            return Err(arg_err!("synthetic canvas must be at least 64x64"));
        }
        if self.min_masses == 0 || self.min_masses > self.max_masses {
            return Err(arg_err!("need 1 <= min_masses <= max_masses"));
        }
        if !(self.radius.0 > 0.0 && self.radius.0 <= self.radius.1) {
            return Err(arg_err!("bad radius range {:?}", self.radius));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Isotropic Gaussian with standard deviation `sigma`.
    Smooth { sigma: f64 },
    /// Lobulated core with radial spikes `(angle, length)`.
    Spiculated {
        core: f64,
        harmonics: Vec<(f64, f64)>,
        spikes: Vec<(f64, f64)>,
    },
}

/// A rendered mass: its centre, class and intensity profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMass {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amplitude: f64,
    pub class: Class,
    /// Pixels where the mass adds at least 10% of its amplitude.
    pub bbox: BBox,
    shape: Shape,
    scale: f64,
}

impl SynthMass {
    /// Intensity the mass adds at pixel centre `(x + 0.5, y + 0.5)`.
    pub fn contribution(&self, x: usize, y: usize) -> f64 {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        let d = math::sqrt(dx * dx + dy * dy);
        match &self.shape {
            Shape::Smooth { sigma } => self.amplitude * math::exp(-d * d / (2.0 * sigma * sigma)),
            Shape::Spiculated {
                core,
                harmonics,
                spikes,
            } => {
                let th = math::atan2(dy, dx);
                let wobble: f64 = harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, (a, ph))| a * math::sin((k as f64 + 2.0) * th + ph))
                    .sum();
                let edge = core * (1.0 + wobble);
                let mut v = self.amplitude / (1.0 + math::exp((d - edge) / (0.8 * self.scale)));
                for &(ang, len) in spikes {
                    let (ux, uy) = (math::cos(ang), math::sin(ang));
                    let t = dx * ux + dy * uy;
                    if t < 0.0 || t > len {
                        continue;
                    }
                    let perp = (dx * uy - dy * ux).abs();
                    let half = 0.4 + 1.3 * self.scale * (1.0 - t / len);
                    if perp <= half {
                        v = v.max(self.amplitude * (0.8 - 0.5 * t / len));
                    }
                }
                v
            }
        }
    }

    /// Radius of the square that contains every non-negligible pixel.
    fn reach(&self) -> f64 {
        match &self.shape {
            Shape::Smooth { sigma } => 3.5 * sigma,
            Shape::Spiculated { core, spikes, .. } => {
                let s = spikes.iter().map(|s| s.1).fold(0.0, f64::max);
                (core * 1.6 + 4.0 * self.scale).max(s + 2.0)
            }
        }
    }

    fn window(&self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let r = self.reach();
        let x0 = (self.cx - r).floor().max(0.0) as usize;
        let y0 = (self.cy - r).floor().max(0.0) as usize;
        let x1 = ((self.cx + r).ceil() as usize).min(w);
        let y1 = ((self.cy + r).ceil() as usize).min(h);
        (x0, y0, x1, y1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub image: GrayImage,
    pub annotations: Vec<Annotation>,
    pub masses: Vec<SynthMass>,
    /// Label blocks placed in the background.
    pub distractors: Vec<BBox>,
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

struct Breast {
    cy: f64,
    a: f64,
    b: f64,
}

impl Breast {
    /// Normalized elliptical radius; ≤ 1 inside the breast.
    fn rho(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.a, (y - self.cy) / self.b);
        math::sqrt(u * u + v * v)
    }
}

fn place_mass(rng: &mut Rng, cfg: &SynthConfig, breast: &Breast, placed: &[SynthMass], s: f64) -> Option<SynthMass> {
    let class = if rng.random_bool(0.5) { Class::Malignant } else { Class::Benign };
    let radius = uniform(rng, cfg.radius.0, cfg.radius.1) * s;
    for _ in 0..200 {
        let cx = uniform(rng, radius + 4.0 * s, breast.a * 0.8);
        let cy = uniform(rng, breast.cy - breast.b * 0.75, breast.cy + breast.b * 0.75);
        if breast.rho(cx, cy) > 0.72 {
            continue;
        }
        if placed.iter().any(|m| {
            let (dx, dy) = (m.cx - cx, m.cy - cy);
            math::sqrt(dx * dx + dy * dy) < 1.6 * (m.radius + radius) + 8.0 * s
        }) {
            continue;
        }
        let (amplitude, shape) = match class {
            Class::Benign => (uniform(rng, 45.0, 60.0), Shape::Smooth { sigma: radius / 2.0 }),
            Class::Malignant => {
                let harmonics = (0..4).map(|_| (uniform(rng, 0.0, 0.12), uniform(rng, 0.0, TAU))).collect();
                let m = rng.random_range(8..=13);
                let spikes = (0..m)
                    .map(|i| {
                        let ang = TAU * i as f64 / m as f64 + uniform(rng, -0.2, 0.2);
                        (ang, radius * uniform(rng, 0.95, 1.5))
                    })
                    .collect();
                (
                    uniform(rng, 65.0, 85.0),
                    Shape::Spiculated {
                        core: 0.65 * radius,
                        harmonics,
                        spikes,
                    },
                )
            }
        };
        return Some(SynthMass {
            cx,
            cy,
            radius,
            amplitude,
            class,
            bbox: BBox {
                x1: 0.0,
                y1: 0.0,
                x2: 0.0,
                y2: 0.0,
            },
            shape,
            scale: s,
        });
    }
    None
}

/// 3×5 glyph bitmaps used to texture the label blocks.
fn glyph(rng: &mut Rng) -> [u8; 5] {
    core::array::from_fn(|_| rng.random_range(1..8u8))
}

fn place_label(rng: &mut Rng, w: usize, h: usize, breast: &Breast, others: &[BBox], s: f64) -> Option<BBox> {
    let bw = uniform(rng, 28.0, 44.0) * s;
    let bh = uniform(rng, 10.0, 14.0) * s;
    let gap = 10.0 * s;
    for _ in 0..60 {
        let x = math::floor(uniform(rng, 2.0, w as f64 - bw - 2.0));
        let y = math::floor(uniform(rng, 2.0, h as f64 - bh - 2.0));
        let b = BBox {
            x1: x,
            y1: y,
            x2: x + math::floor(bw),
            y2: y + math::floor(bh),
        };
        let clear = (0..=8).all(|i| {
            (0..=8).all(|j| {
                let px = b.x1 - gap + (b.width() + 2.0 * gap) * i as f64 / 8.0;
                let py = b.y1 - gap + (b.height() + 2.0 * gap) * j as f64 / 8.0;
                breast.rho(px.max(0.0), py) > 1.0
            })
        });
        let apart = others.iter().all(|o| {
            b.x2 + gap <= o.x1 || o.x2 + gap <= b.x1 || b.y2 + gap <= o.y1 || o.y2 + gap <= b.y1
        });
        if clear && apart {
            return Some(b);
        }
    }
    None
}

/// Renders sample `index` of the corpus identified by `seed`.
///
/// A dark textured background holds a bright half-ellipse of breast tissue
/// against the left edge. Benign masses are smooth Gaussian blobs;
/// malignant masses are brighter lobulated cores with radial spikes.
/// Pixel values are integers so the image survives 8-bit storage exactly.
pub fn render_sample(index: usize, cfg: &SynthConfig, seed: u64) -> Result<SynthSample> {
    cfg.validate()?;
    let (w, h) = cfg.canvas;
    let s = w.min(h) as f64 / 256.0;
    let mut rng = rng::stream(seed, &format!("synth/{index}"));
    let breast = {
        let cy = h as f64 * (0.5 + uniform(&mut rng, -0.04, 0.04));
        let bmax = cy.min(h as f64 - cy) - 4.0 * s;
        Breast {
            cy,
            a: w as f64 * uniform(&mut rng, 0.6, 0.75),
            b: (h as f64 * uniform(&mut rng, 0.40, 0.46)).min(bmax),
        }
    };
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = uniform(&mut rng, 0.02, 0.08) / s;
            let ang = uniform(&mut rng, 0.0, TAU);
            (f * math::cos(ang), f * math::sin(ang), uniform(&mut rng, 0.0, TAU))
        })
        .collect();
    let mut px = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let rho = breast.rho(fx, fy);
            px[y * w + x] = if rho <= 1.0 {
                let tex: f64 = waves.iter().map(|(kx, ky, ph)| math::sin(kx * fx + ky * fy + ph)).sum::<f64>() / 3.0;
                let r2 = rho * rho;
                (90.0 + 18.0 * tex) * (1.0 - 0.35 * r2 * r2) + uniform(&mut rng, -3.0, 3.0)
            } else {
                8.0 + uniform(&mut rng, 0.0, 6.0)
            };
        }
    }
    let n_masses = rng.random_range(cfg.min_masses..=cfg.max_masses);
    let mut masses: Vec<SynthMass> = Vec::new();
    for _ in 0..n_masses {
        if let Some(m) = place_mass(&mut rng, cfg, &breast, &masses, s) {
            masses.push(m);
        }
    }
    for m in &mut masses {
        let (x0, y0, x1, y1) = m.window(w, h);
        let (mut bx0, mut by0, mut bx1, mut by1) = (usize::MAX, usize::MAX, 0, 0);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = m.contribution(x, y);
                px[y * w + x] += c;
                if c >= 0.1 * m.amplitude {
                    bx0 = bx0.min(x);
                    by0 = by0.min(y);
                    bx1 = bx1.max(x + 1);
                    by1 = by1.max(y + 1);
                }
            }
        }
        m.bbox = BBox {
            x1: bx0 as f64,
            y1: by0 as f64,
            x2: bx1 as f64,
            y2: by1 as f64,
        };
    }
    let mut distractors = Vec::new();
    if cfg.distractors {
        let count = rng.random_range(1..=2);
        for _ in 0..count {
            let Some(b) = place_label(&mut rng, w, h, &breast, &distractors, s) else {
                continue;
            };
            let (x0, y0) = (b.x1 as usize, b.y1 as usize);
            let (bw, bh) = (b.width() as usize, b.height() as usize);
            let fill = uniform(&mut rng, 200.0, 235.0);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    px[y * w + x] = fill;
                }
            }
            // dark characters in a single text line
            let cell = (2.0 * s).max(1.0) as usize;
            let (gw, gh) = (4 * cell, 5 * cell);
            let top = y0 + (bh.saturating_sub(gh)) / 2;
            let mut cx = x0 + cell;
            while cx + 3 * cell < x0 + bw - cell {
                let g = glyph(&mut rng);
                for (row, bits) in g.iter().enumerate() {
                    for col in 0..3 {
                        if bits >> (2 - col) & 1 == 1 {
                            for yy in 0..cell {
                                for xx in 0..cell {
                                    let (x, y) = (cx + col * cell + xx, top + row * cell + yy);
                                    if y < y0 + bh {
                                        px[y * w + x] = 40.0;
                                    }
                                }
                            }
                        }
                    }
                }
                cx += gw;
            }
            distractors.push(b);
        }
    }
    let pixels = px.into_iter().map(|v| math::roundf(v.clamp(0.0, 255.0) as f32)).collect();
    Ok(SynthSample {
        id: format!("synth_{index:04}"),
        image: GrayImage::new(w, h, pixels)?,
        annotations: masses
            .iter()
            .map(|m| Annotation {
                bbox: m.bbox,
                class: m.class,
            })
            .collect(),
        masses,
        distractors,
    })
}

pub fn generate_synthetic_dataset(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthSample>> {
    (0..n).map(|i| render_sample(i, cfg, seed)).collect()
}

//! Seeded random streams.
//!
//! A single root seed fans out into named sub-streams ("split", "init",
//! "augment", ...), so changing how much randomness one stage consumes
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a, used only to turn stream names into seed material.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the named sub-stream of `root`.
pub fn substream_seed(root: u64, name: &str) -> u64 {
    splitmix(root ^ splitmix(fnv1a(name.as_bytes())))
}

pub fn stream(root: u64, name: &str) -> Rng {
    Rng::seed_from_u64(substream_seed(root, name))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Tensor of independent `N(0, std²)` draws.
pub fn normal_tensor(shape: &[usize], std: f32, rng: &mut Rng) -> crate::Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    crate::Tensor::new(shape, data).expect("shape product matches data length")
}

/// He-normal initialization: `N(0, 2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> crate::Tensor {
    normal_tensor(shape, crate::math::sqrt(2.0 / fan_in.max(1) as f64) as f32, rng)
}

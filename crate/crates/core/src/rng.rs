//! Deterministic named RNG sub-streams.
//!
//! Every random decision in the pipeline draws from a stream derived from
//! (master seed, stream name), so changing one consumer never perturbs the
//! draws of another.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// RNG for a named sub-stream of the master seed.
pub fn stream(master_seed: u64, name: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let seed: [u8; 32] = digest.into();
    <ChaCha12Rng as rand::SeedableRng>::from_seed(seed)
}

/// Stream scoped to one item of an indexed family (case index, style name...).
pub fn indexed_stream(master_seed: u64, name: &str, index: u64) -> ChaCha12Rng {
    stream(master_seed, &format!("{name}/{index}"))
}

/// Uniform draw from an inclusive [min, max] range given as a 2-array.
pub fn uniform_in(rng: &mut ChaCha12Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        return range[0];
    }
    rng.gen_range(range[0]..=range[1])
}

/// Standard normal via Box-Muller; two uniforms per draw, fixed order.
pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

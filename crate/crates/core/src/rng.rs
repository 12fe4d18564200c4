//! Named seed sub-streams, so each component can be re-seeded on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sub-stream names used by the pipeline.
pub const CI: &str = "ci";
pub const BOOTSTRAP: &str = "bootstrap";
pub const MCMC: &str = "mcmc";
pub const SIM: &str = "sim";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sub-stream `name` under `seed`.
pub fn substream(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the parent seed.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Seed of the `index`-th child of `seed`, for per-task parallel streams.
pub fn child(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

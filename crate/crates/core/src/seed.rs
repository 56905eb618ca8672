//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a root seed and a stream index, so results never depend on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64) -> u64 {
    mix(mix(root) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Seed derived from a named stage, e.g. `"select"`.
pub fn derive_named(root: u64, name: &str) -> u64 {
    let h = name
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
        });
    derive_seed(root, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    rng(derive_seed(root, stream))
}

//! Seed derivation for independent random streams.
//!
//! Every stochastic unit of work (one trajectory, one resampled state, one
//! PRM noise draw) owns a stream derived from a root seed and a path of
//! indices, so results never depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream RNG used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a path of stream indices into a new 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(root), |acc, &p| {
        splitmix(acc ^ splitmix(p.wrapping_add(GOLDEN)))
    })
}

/// Opens the stream identified by `(root, path)`.
pub fn stream(root: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, path))
}

/// Stream domain tags, keeping unrelated consumers of the same root seed apart.
pub mod domain {
    pub const POOL: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const RESAMPLE: u64 = 3;
    pub const PRM_NOISE: u64 = 4;
    pub const PRM_DATA: u64 = 5;
    pub const POLICY_INIT: u64 = 6;
    pub const BATCH: u64 = 7;
    pub const LAB: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const WARMUP: u64 = 10;
}

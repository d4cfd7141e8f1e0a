//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded by
//! mixing a master seed with a path of labels (phase, iteration, trajectory
//! index, ...). Streams therefore do not depend on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels used by the crate. Callers may use any other `u64`.
pub mod label {
    pub const WARMUP: u64 = 0x5741_524d;
    pub const FINAL: u64 = 0x4649_4e4c;
    pub const EVAL: u64 = 0x4556_414c;
    pub const DIAGNOSTIC: u64 = 0x4449_4147;
    pub const ENV_DIST: u64 = 0x454e_5644;
    pub const CURRICULUM: u64 = 0x4355_524c;
    pub const REFERENCE: u64 = 0x5245_4646;
    pub const INSTANCE: u64 = 0x494e_5354;
    pub const ACTIONS: u64 = 0x4143_5453;

    /// Every label with its name, for run manifests.
    pub const ALL: [(&str, u64); 9] = [
        ("warmup", WARMUP),
        ("final", FINAL),
        ("eval", EVAL),
        ("diagnostic", DIAGNOSTIC),
        ("env_dist", ENV_DIST),
        ("curriculum", CURRICULUM),
        ("reference", REFERENCE),
        ("instance", INSTANCE),
        ("actions", ACTIONS),
    ];
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and a label path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    let s = derive_seed(master, path);
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(s.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

//! Deterministic random substreams.
//!
//! Every directed reception at every time step draws from its own ChaCha8
//! stream keyed by `(run seed, t, link id)`, so trajectories do not depend on
//! the order in which links are sampled or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an arbitrary list of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Seed of Monte-Carlo run `index` derived from a base seed.
pub fn run_seed(base_seed: u64, index: u64) -> u64 {
    mix(&[base_seed, index, 0x52_55_4E])
}

/// Stream for the reception on directed link `link` at time `t`.
pub fn link_rng(run_seed: u64, t: u64, link: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (lane, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix(&[run_seed, t, link, lane as u64]).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

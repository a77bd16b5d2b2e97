//! Counter-based random streams for reproducible parallel sweeps.
//!
//! Each episode owns a private ChaCha stream whose seed is derived from
//! `(base_seed, episode_index)` through a splitmix64-style mixer, so sweeps
//! give identical results regardless of worker scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type EpisodeRng = ChaCha12Rng;

/// splitmix64 finalizer; a full-avalanche 64-bit mixer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the child seed for stream `index` of `base_seed`.
pub fn child_seed(base_seed: u64, index: u64) -> u64 {
    mix64(base_seed.wrapping_add(mix64(index ^ 0xa076_1d64_78bd_642f)))
}

/// Builds the RNG for one episode; distinct `(base_seed, index)` pairs give
/// disjoint streams.
pub fn episode_rng(base_seed: u64, index: u64) -> EpisodeRng {
    let mut state = child_seed(base_seed, index);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

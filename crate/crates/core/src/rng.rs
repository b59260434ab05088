//! Seed derivation. One master seed fans out into independent, stable streams
//! (one per arm, one per player) so that arm draws never depend on how many
//! players exist or what they do.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const ARM_DOMAIN: u64 = 0x6172_6d5f_6472_6177; // "arm_draw"
const PLAYER_DOMAIN: u64 = 0x706c_6179_6572_5f31; // "player_1"

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ domain).wrapping_add(index))
}

pub fn arm_stream(seed: u64, arm: usize) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, ARM_DOMAIN, arm as u64))
}

pub fn player_seed(seed: u64, player: usize) -> u64 {
    derive_seed(seed, PLAYER_DOMAIN, player as u64)
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

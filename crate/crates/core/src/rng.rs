//! Seed derivation. Every random stream in the crate comes from one master
//! seed combined with a component id, so any component can be replayed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Component ids for [`derive_seed`].
pub mod component {
    pub const MODEL_INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const ATTACKER: u64 = 4;
    pub const DOWNSTREAM: u64 = 5;
    pub const DP_TRAIN: u64 = 6;
    pub const DP_TEST: u64 = 7;
    pub const BENCH: u64 = 8;
    pub const SYNTH: u64 = 9;
    pub const IDX_DOMAIN: u64 = 10;
    /// Epoch `k` shuffles with component `SHUFFLE_BASE + k`.
    pub const SHUFFLE_BASE: u64 = 1 << 32;
}

/// `seed + component × stride` (wrapping).
pub fn derive_seed(seed: u64, component: u64) -> u64 {
    seed.wrapping_add(component.wrapping_mul(STRIDE))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived(seed: u64, component: u64) -> Rng {
    seeded(derive_seed(seed, component))
}

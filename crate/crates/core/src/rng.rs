//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream addressed
//! by `(seed, domain, lane, index)`. The key is derived from the first three
//! through SplitMix64 mixing and `index` selects the ChaCha stream id, so any
//! iteration can be replayed on its own, on any thread, in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent consumers of randomness. Values are part of the
/// reproducibility contract; never renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Estimator = 1,
    Variance = 2,
    OracleData = 3,
    OracleEffect = 4,
    Fees = 5,
    Reproduce = 6,
    Validation = 7,
}

/// Lane shared between both policies within one iteration.
pub const SHARED_LANE: u64 = 0;

/// Lane private to one policy within one iteration.
pub fn policy_lane(policy_index: usize) -> u64 {
    1 + policy_index as u64
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a sequence of tags into a fresh 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &tag in tags {
        state ^= tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out ^= splitmix64(&mut state);
    }
    out
}

pub fn stream(seed: u64, domain: Domain, lane: u64, index: u64) -> StreamRng {
    let mut state = derive_seed(seed, &[domain as u64, lane]);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

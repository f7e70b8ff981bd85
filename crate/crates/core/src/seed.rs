//! Deterministic seed derivation.
//!
//! Every randomized component takes a master seed plus a fixed label path and
//! derives an independent ChaCha stream from it. Parallel and serial
//! execution therefore consume identical randomness: a worker never shares an
//! RNG, it re-derives its own from `(master, labels...)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; good avalanche behaviour for seed mixing.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a label path into a single derived seed.
pub fn derive(master: u64, labels: &[u64]) -> u64 {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    let mut out = splitmix64(&mut state);
    for &label in labels {
        state ^= label;
        out ^= splitmix64(&mut state);
    }
    out
}

/// A ChaCha RNG for the stream identified by `(master, labels...)`.
pub fn rng(master: u64, labels: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(master, labels))
}

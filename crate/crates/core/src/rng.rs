//! Named deterministic RNG streams.
//!
//! Every seeded operation in the workbench derives its generator from a run
//! seed plus a short label, so adding a new consumer of randomness never
//! shifts the draws seen by existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes; stable across platforms.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 step; used to expand a seed into key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    stream_indexed(seed, label, 0)
}

/// Deterministic generator for `(seed, label, index)`; used where every item
/// of a batch (one bracket string, one injected position, ...) gets its own
/// independent stream.
pub fn stream_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ fnv1a(label.as_bytes()) ^ index.wrapping_mul(0x2545_f491_4f6c_dd1d);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

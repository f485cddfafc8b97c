//! Deterministic random streams.
//!
//! Every replication owns independent streams derived from
//! `(base_seed, replication, purpose)`. The base seed is expanded into a
//! ChaCha key with SplitMix64, and `(replication, purpose)` selects the
//! ChaCha stream, so streams never overlap and do not depend on the order in
//! which replications are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Arrivals (covariates and residuals) and the
/// policy's auxiliary randomness never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Arrivals = 0,
    Policy = 1,
    Auxiliary = 2,
}

const PURPOSE_BITS: u32 = 8;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_from_seed(base_seed: u64) -> [u8; 32] {
    let mut state = base_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Stream for replication `replication` and the given purpose.
///
/// Replication indices must stay below `2^56`.
pub fn stream(base_seed: u64, replication: u64, purpose: Purpose) -> StreamRng {
    debug_assert!(replication < (1u64 << (64 - PURPOSE_BITS)));
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(base_seed));
    rng.set_stream((replication << PURPOSE_BITS) | purpose as u64);
    rng
}

/// A single stream seeded from `seed`, for callers that need one generator.
pub fn seeded(seed: u64) -> StreamRng {
    stream(seed, 0, Purpose::Auxiliary)
}

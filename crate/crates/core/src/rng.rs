//! Deterministic random streams.
//!
//! Every random consumer draws from its own ChaCha stream keyed by
//! `(seed, purpose, index)`. Work can then be split across threads in any
//! order without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream even
/// with the same seed and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Chain = 1,
    Replicate = 2,
    Population = 3,
    Design = 4,
    Realization = 5,
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

/// Derive a child seed, used when one realization needs a fresh seed for a
/// nested component (sampler, replicates).
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, purpose, index).next_u64()
}

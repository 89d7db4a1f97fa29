//! Seeded random streams.
//!
//! Every stochastic routine takes a master seed plus a stream id. The pair
//! maps to an independent ChaCha stream, so work split across threads
//! reproduces exactly regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed, used when a stream itself needs to fan out.
pub fn child_seed(seed: u64, stream_id: u64) -> u64 {
    use rand::RngCore;
    stream(seed, stream_id).next_u64()
}

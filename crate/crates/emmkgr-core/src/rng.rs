//! Seeded random streams. Every stage of the pipeline draws from its own
//! named substream of one master seed, so stages can be re-run independently
//! without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named substreams of the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Sampling = 3,
    KMeans = 4,
    Synth = 5,
    Cohesion = 6,
}

/// Deterministic RNG for one (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

//! Seeded, named random substreams.
//!
//! All randomness in a run flows from one seed; each stage draws from its own
//! ChaCha stream so stages are reproducible independently and Monte-Carlo
//! samples can be generated in parallel by index.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named purposes for the stream id space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Potential = 1,
    Scan = 2,
    InitialData = 3,
    Probe = 4,
    Test = 5,
}

/// Counter-based substream: deterministic in `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

//! Deterministic random streams.
//!
//! Every random decision in the crate (split permutations, mask positions,
//! synthetic data) draws from ChaCha8 seeded through `seed_from_u64`, which
//! expands the 64-bit seed with PCG32 as documented by `rand_core`. ChaCha8 is
//! a counter-based generator whose output stream is fixed by its published
//! algorithm, so a given seed reproduces the same splits on any platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Golden-ratio increment used to decorrelate derived seeds.
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A stream keyed by `(seed, index)`, e.g. one per sentence.
pub fn substream(seed: u64, index: u64) -> StreamRng {
    stream(seed ^ index.wrapping_add(1).wrapping_mul(SEED_STRIDE))
}

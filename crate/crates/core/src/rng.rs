//! Reproducible random streams.
//!
//! Every run is identified by a `(seed, stream)` pair. The generator is
//! ChaCha8 keyed by `seed` (expanded through `SeedableRng::seed_from_u64`)
//! with its 64-bit stream id set to `stream`. Replica `i` of a batch started
//! from `base_seed` uses `(base_seed, i)`, so replicas are independent, can
//! run in any order, and each one can be re-run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

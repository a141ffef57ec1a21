//! Seeded, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator keyed
//! by a 64-bit seed and selected by a stream index, so parallel trials can use
//! disjoint streams and still be reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `(seed, stream)`. Distinct streams are independent.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

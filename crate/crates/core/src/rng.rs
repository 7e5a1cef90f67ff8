//! Seeded random streams.
//!
//! One ChaCha8 key per experiment seed; independent streams are selected by
//! the generator's 64-bit stream index, so replication blocks can be drawn in
//! any order or thread without changing their contents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// The random stream `index` of experiment `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

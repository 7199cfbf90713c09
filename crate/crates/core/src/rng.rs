//! Named random streams keyed by run seed, component, and index, so paired
//! runs (different solvers, same seed) see identical plant noise.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Plant = 1,
    Controller = 2,
    Reference = 3,
    Episode = 4,
    Split = 5,
}

/// Generator for `(seed, tag, index)`; distinct keys give independent
/// streams, equal keys give identical ones.
pub fn stream(seed: u64, tag: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng.set_word_pos(u128::from(index) << 40);
    rng
}

/// A child seed derived from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: Stream, index: u64) -> u64 {
    stream(seed, tag, index).next_u64()
}

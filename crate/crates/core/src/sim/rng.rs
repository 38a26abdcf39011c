//! Named, splittable random substreams derived from one user seed.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(seed, tag, index)`, so results do not depend on execution order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REPLICATION: u64 = 1;
pub const FIXED_MODEL: u64 = 2;
pub const SPLIT: u64 = 3;
pub const PLANTED: u64 = 4;

pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) | (index & ((1 << 48) - 1)));
    rng
}

/// A fresh 64-bit seed drawn from the `(seed, tag, index)` substream.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    substream(seed, tag, index).next_u64()
}

//! Deterministic substreams keyed by `(seed, batch, purpose)`.
//!
//! Every batch of paths owns its own ChaCha stream, so results do not depend on
//! how batches are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Claims, inter-arrival times and everything that shares the claim path.
pub const CLAIMS: u64 = 0;
pub const PREMIUM_1: u64 = 1;
pub const PREMIUM_2: u64 = 2;
/// Pilot runs for stratification weights.
pub const PILOT: u64 = 3;
const PURPOSES: u64 = 8;

pub fn substream(seed: u64, batch: u64, purpose: u64) -> ChaCha8Rng {
    debug_assert!(purpose < PURPOSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch * PURPOSES + purpose);
    rng
}

/// Splits `n` paths into consecutive batches of at most `size`.
pub fn batches(n: u64, size: u64) -> Vec<(u64, u64)> {
    let size = size.max(1);
    (0..n.div_ceil(size)).map(|b| (b, size.min(n - b * size))).collect()
}

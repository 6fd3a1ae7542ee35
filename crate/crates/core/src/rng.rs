//! Seeded random streams.
//!
//! Every consumer of randomness takes an explicit `u64` seed and a stream tag,
//! so that two operations fed the same seed never share a sequence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_SPLIT: u64 = 1;
pub(crate) const STREAM_SUBSAMPLE: u64 = 2;
pub(crate) const STREAM_ANOMALY: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 4;
pub(crate) const STREAM_SHUFFLE: u64 = 5;
pub(crate) const STREAM_FOLDS: u64 = 6;
/// Simulator rows use `STREAM_SIM_BASE + row`.
pub(crate) const STREAM_SIM_BASE: u64 = 1 << 32;

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A seeded permutation of `0..n`.
pub(crate) fn permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed, stream));
    idx
}

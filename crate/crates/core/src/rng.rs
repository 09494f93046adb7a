//! Seeded, platform-independent random streams.
//!
//! Every stochastic step draws from its own ChaCha stream keyed by `(seed, stream)`,
//! so parallel and serial execution consume identical sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) const SPLIT: u64 = 1;
pub(crate) const SHUFFLE: u64 = 2;
pub(crate) const DROPOUT: u64 = 3;
pub(crate) const INIT: u64 = 4;
pub(crate) const FOLDS: u64 = 5;
pub(crate) const SUBSAMPLE: u64 = 6;
/// Per-class SVM shuffles use `SVM + class`.
pub(crate) const SVM: u64 = 1 << 33;
/// Extra-trees use `TREES + tree_index`.
pub(crate) const TREES: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

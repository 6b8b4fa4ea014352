//! Seeded random streams. Every consumer derives its own ChaCha stream from a
//! `(seed, stream)` pair so that independent draws never shift each other.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod streams {
    pub const RESAMPLE: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const GBT_ROWS: u64 = 3;
    pub const GBT_COLS: u64 = 4;
    pub const MLP_INIT: u64 = 5;
    pub const MLP_SHUFFLE: u64 = 6;
    pub const SYNTH_PROBE: u64 = 7;
    pub const OCSVM_ROWS: u64 = 8;
    pub const SYNTH_BLOCK_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `k` distinct indices from `0..n`, uniformly, in increasing order.
pub fn sample_without_replacement(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    let (chosen, _) = idx.partial_shuffle(rng, k);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    chosen
}

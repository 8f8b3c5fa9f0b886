//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha8 generator keyed by a 64-bit
//! seed and a 64-bit stream id. Distinct stream ids on the same seed never
//! overlap, so training-set generation, test-set generation, subsampling,
//! weight initialization and batch drawing are mutually independent even when
//! they share a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Identifier of the generator algorithm, recorded in reports and manifests.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9";

pub mod stream {
    pub const INIT: u64 = 0;
    pub const BATCHES: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const TEST_DATA: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const DUPLICATION: u64 = 5;
}

pub fn seeded(seed: u64, stream_id: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

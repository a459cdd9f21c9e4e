//! Seed plumbing. One master seed fans out into independent, purpose-tagged
//! streams so that e.g. mask geometry, phantom noise and weight init never
//! share state and every output is reproducible bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Deterministic stream cipher RNG used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Derive a child seed from (master, purpose, index) with splitmix steps.
pub fn derive_seed(master: u64, purpose: u64, index: u64) -> u64 {
    let mut z = master ^ purpose.rotate_left(17) ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Purpose tags for derived streams.
pub mod purpose {
    pub const MASK_GEOMETRY: u64 = 0x6d61736b;
    pub const PHANTOM_NOISE: u64 = 0x70686e74;
    pub const WEIGHT_INIT: u64 = 0x696e6974;
    pub const BATCH_SAMPLING: u64 = 0x62617463;
    pub const AUGMENT: u64 = 0x6175676d;
}

/// Serializable snapshot of a ChaCha stream, for checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

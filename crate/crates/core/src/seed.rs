//! Counter-based seed derivation, so that every random stream depends only on
//! (master seed, stream, index) and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

pub(crate) mod streams {
    pub const BATCHES: u64 = 1;
    pub const SHUFFLE_PICK: u64 = 2;
    pub const SHUFFLE_ORDER: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const DOCUMENT: u64 = 5;
}

//! Seeded random streams.
//!
//! Every logical consumer (a node during a training step, a node during
//! evaluation, the batch shuffler) owns its own ChaCha stream keyed by a tuple
//! of indices, so results do not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a tuple of indices into one stream identifier.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

pub fn stream(seed: u64, parts: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(parts));
    rng
}

/// Domain tags so that streams used for different purposes never collide.
pub mod tag {
    pub const SHUFFLE: u64 = 1;
    pub const TRAIN_NODE: u64 = 2;
    pub const EVAL_NODE: u64 = 3;
    pub const INIT: u64 = 4;
}

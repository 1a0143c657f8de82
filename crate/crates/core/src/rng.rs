//! Deterministic random streams.
//!
//! Every stochastic component draws from a ChaCha stream derived from the
//! user seed and a list of integer tags (restart index, iteration, regime,
//! location, ...). Streams never depend on thread scheduling, so results are
//! identical for any worker count.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from `seed` and `tags`.
pub fn derive(seed: u64, tags: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed);
    for &tag in tags {
        h = splitmix64(h ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    StreamRng::seed_from_u64(h)
}

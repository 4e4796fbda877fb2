//! Named, reproducible random streams.
//!
//! Every stochastic job (a restart, a bootstrap resample, a study trial)
//! draws from its own ChaCha stream selected by `(seed, name, index)`, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for job `index` of family `name` (e.g. `"fit.restart"`, 3).
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(fnv1a(name.as_bytes()) ^ splitmix(index)));
    rng
}

/// Derive a child seed, used when a whole sub-pipeline (a study trial, a
/// design round) needs its own master seed.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix(seed ^ splitmix(fnv1a(name.as_bytes()).wrapping_add(index)))
}

//! Seed handling. Every random consumer gets its own ChaCha stream derived
//! from the run seed and a tuple of integer labels, so results do not depend
//! on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Number of draws assigned to one substream in chunked Monte Carlo loops.
pub const CHUNK: usize = 4096;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of labels into a new seed.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix(seed), |acc, &l| splitmix(acc ^ splitmix(l)))
}

/// Stable 64-bit FNV-1a hash of a string label.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for substream `labels` of `seed`.
pub fn stream(seed: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, labels))
}

/// Splits `n` draws into `(chunk_index, len)` pieces of at most [`CHUNK`].
pub(crate) fn chunks(n: usize) -> impl Iterator<Item = (u64, usize)> {
    (0..n.div_ceil(CHUNK)).map(move |c| (c as u64, CHUNK.min(n - c * CHUNK)))
}

//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator addressed by a
//! `(seed, stream)` pair, so a sample depends only on its own coordinates and
//! never on how work was split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 64-bit hash of a master seed and a task descriptor.
pub fn derive_seed(master: u64, descriptor: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(descriptor.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed-size chunking used for parallel Monte Carlo; chunk `i` always covers
/// the same sample indices and draws from stream `i`.
pub const MC_CHUNK: usize = 1 << 14;

/// Chunk ranges covering `0..total`.
pub fn chunks(total: usize) -> Vec<(u64, std::ops::Range<usize>)> {
    (0..total.div_ceil(MC_CHUNK))
        .map(|i| (i as u64, i * MC_CHUNK..((i + 1) * MC_CHUNK).min(total)))
        .collect()
}

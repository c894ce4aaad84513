//! Named deterministic random streams.
//!
//! Every random decision in a run draws from a stream whose seed is derived
//! from the master seed and a label path such as `["stage0", "ckpt3", "query"]`.
//! The seed is the 64-bit FNV-1a hash of the master seed's little-endian bytes
//! followed by the labels joined with `/`. The generator behind a stream is
//! ChaCha8, so draws are identical on every platform.
//!
//! Test vector: master seed 42, labels `["stage0", "ckpt1"]` hash to
//! `0x702d578fcfac0bf7`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Seed of the stream named by `labels` under `master_seed`.
pub fn stream_seed<S: AsRef<str>>(master_seed: u64, labels: &[S]) -> u64 {
    let mut bytes = master_seed.to_le_bytes().to_vec();
    for (i, label) in labels.iter().enumerate() {
        if i > 0 {
            bytes.push(b'/');
        }
        bytes.extend_from_slice(label.as_ref().as_bytes());
    }
    fnv1a64(&bytes)
}

/// A seeded random stream. Never shared between concurrent callers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Derive the stream for a label path. `labels` should be non-empty.
pub fn derive_stream<S: AsRef<str>>(master_seed: u64, labels: &[S]) -> RngStream {
    debug_assert!(!labels.is_empty(), "stream label path must be non-empty");
    RngStream::from_seed(stream_seed(master_seed, labels))
}

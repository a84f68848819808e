//! Content hashing helpers.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Incremental hasher over a sequence of length-prefixed parts, so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
#[derive(Default)]
pub struct PartHasher {
    inner: Sha256,
}

impl PartHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(&mut self, bytes: impl AsRef<[u8]>) -> &mut Self {
        let bytes = bytes.as_ref();
        self.inner.update((bytes.len() as u64).to_le_bytes());
        self.inner.update(bytes);
        self
    }

    pub fn finish_hex(self) -> String {
        hex::encode(self.inner.finalize())
    }

    pub fn finish_bytes(self) -> [u8; 32] {
        self.inner.finalize().into()
    }
}


/// Deterministic random stream derived from a master seed and a path label.
/// Distinct paths yield independent streams.
pub fn seeded_rng(master_seed: u64, path: &str) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = PartHasher::new();
    h.part(master_seed.to_le_bytes()).part(path);
    rand_chacha::ChaCha8Rng::from_seed(h.finish_bytes())
}

//! Keyed random streams.
//!
//! Every path draws from its own ChaCha12 stream. The 256-bit key is the
//! SHA-256 digest of the study seed and a domain tuple (step size, step
//! count, ...), the stream id is the path index. Streams are therefore
//! reproducible in isolation and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub const RNG_ALGORITHM: &str = "chacha12; key=sha256(seed,domain); stream=path";

pub fn domain_key(seed: u64, domain: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"dsmr-lab/v1");
    h.update(seed.to_le_bytes());
    for d in domain {
        h.update(d.to_le_bytes());
    }
    h.finalize().into()
}

pub fn path_stream(key: &[u8; 32], path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(*key);
    rng.set_stream(path);
    rng
}

pub fn stream(seed: u64, domain: &[u64], path: u64) -> ChaCha12Rng {
    path_stream(&domain_key(seed, domain), path)
}

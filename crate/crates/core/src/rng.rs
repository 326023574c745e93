//! Named random sub-streams derived from one experiment seed.
//!
//! Every consumer of randomness (initialization, batch sampling, each
//! perturbed behavior) draws from its own ChaCha stream, keyed by a name, so
//! turning one consumer on or off never shifts another's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const INIT_STREAM: &str = "init";
pub const SAMPLING_STREAM: &str = "sampling";

pub fn sub_stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

//! Seed derivation for independent, order-free RNG streams.
//!
//! Every stochastic step (init, partition, per-client shuffles, bank sampling)
//! draws from a stream keyed by the master seed and a tuple of integers, so
//! running clients in parallel or in a different order cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_PARTITION: u64 = 2;
pub const STREAM_CLIENT: u64 = 3;
pub const STREAM_BANK: u64 = 4;
pub const STREAM_SYNTHETIC: u64 = 5;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes `master` together with `parts` into a new 64-bit seed.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the batch shuffle of `epoch` in `round` on the client keyed by `client_key`.
pub fn epoch_seed(master: u64, client_key: u64, round: usize, epoch: usize) -> u64 {
    derive(master, &[STREAM_CLIENT, client_key, round as u64, epoch as u64])
}

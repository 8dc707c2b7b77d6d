//! Sampling seeds. Every randomized routine takes its seed from here so that
//! `ROBUSTDP_SEED` can override all of them at once.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ENV_VAR: &str = "ROBUSTDP_SEED";

pub const INTERIORITY: u64 = 42;
pub const HORIZON_RAYS: u64 = 7;
pub const CONCAVITY: u64 = 11;
pub const RESTARTS: u64 = 13;
pub const ENVELOPE: u64 = 17;
pub const VERIFY: u64 = 29;

pub fn resolve(default: u64) -> u64 {
    std::env::var(ENV_VAR)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(default)
}

pub fn rng(default: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(resolve(default))
}

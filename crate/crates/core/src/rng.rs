//! Seed derivation helpers shared by the simulator, splitter and eval harness.
//!
//! All randomness in this crate flows through ChaCha8 streams seeded from
//! `u64` values, so every artifact is reproducible byte for byte. Per-entity
//! streams (one per user, one per eval arm, ...) are derived by mixing the
//! parent seed with the entity id, which keeps sharded generation independent
//! of worker scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and an entity id.
pub fn derive_seed(parent: u64, entity: u64) -> u64 {
    mix64(parent ^ mix64(entity))
}

/// Deterministic RNG stream for a (seed, entity) pair.
pub fn stream(parent: u64, entity: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, entity))
}

/// Deterministic RNG from a bare seed.
pub fn root(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic coin flip keyed by (seed, a, b), as a fraction in [0, 1).
///
/// Used for listing attributes so that "does listing L satisfy filter F"
/// is a pure function of the world seed with no stored table.
pub fn keyed_fraction(seed: u64, a: u64, b: u64) -> f64 {
    let h = mix64(seed ^ mix64(a).wrapping_add(mix64(b).rotate_left(17)));
    // 53 high bits -> uniform in [0, 1)
    (h >> 11) as f64 / (1u64 << 53) as f64
}

//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent
//! substreams are derived from a run seed with ChaCha's stream counter, so
//! callers that want per-example reproducibility never share state.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

/// Generator for `(seed, stream)`. Distinct streams never overlap.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Named stream ids used across the crate, kept apart so that changing one
/// consumer does not perturb another.
pub mod streams {
    pub const THETA: u64 = 1;
    pub const EVALUATION: u64 = 2;
    /// Layer `i` initializes from `INIT_BASE + i`.
    pub const INIT_BASE: u64 = 1 << 16;
    pub const SHUFFLE: u64 = 3;
    pub const PAIRING: u64 = 4;
    pub const VALIDATION_PAIRING: u64 = 5;
    pub const LTEST_PAIRING: u64 = 6;
    /// Per-example simulation streams start here and count upwards.
    pub const SIMULATION_BASE: u64 = 1 << 32;
}

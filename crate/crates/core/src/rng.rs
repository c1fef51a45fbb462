//! Deterministic RNG plumbing.
//!
//! Every randomized routine takes `&mut impl Rng`, and reproducibility is a
//! contract: a given (seed, stream) pair always yields the same draws, so
//! replicas can run in parallel and still merge into the byte-identical
//! serial result as long as they are merged in stream order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The simulation generator. ChaCha8 is counter-based with 2^64 independent
/// streams per seed, which is what makes per-replica splitting cheap.
pub type SimRng = ChaCha8Rng;

/// Generator for replica `stream` of the run keyed by `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sub-seed for an independent purpose (a second cohort, an auxiliary walk).
/// splitmix64 finalizer; distinct tags give decorrelated seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

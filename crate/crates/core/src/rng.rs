//! Counter-based seed splitting.
//!
//! Every random draw in the crate is addressed by `(seed, stream, index, trial)`
//! so experiments replay bit-identically and parallelize without shared state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams. The discriminant is mixed into the derived seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Radius = 1,
    Carving = 2,
    BallRadius = 3,
    Instance = 4,
    Order = 5,
    Laakso = 6,
    Adversary = 7,
    TreeGen = 8,
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed for one `(stream, index, trial)` cell.
#[inline]
pub fn derive_seed(seed: u64, stream: Stream, index: u64, trial: u64) -> u64 {
    let a = splitmix64(trial ^ 0xA076_1D64_78BD_642F);
    let b = splitmix64(index ^ a);
    let c = splitmix64((stream as u64).rotate_left(56) ^ b);
    splitmix64(seed ^ c)
}

/// A ChaCha8 generator for one cell.
pub fn rng_for(seed: u64, stream: Stream, index: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index, trial))
}

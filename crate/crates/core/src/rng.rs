//! Counter-keyed random streams.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key is the tuple
//! `(seed, trial, level, purpose)`. Draws therefore depend only on the key
//! and the position inside the stream, never on which worker produced them,
//! so Monte Carlo loops give identical results for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes never share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    BrownianIncrements = 1,
    BridgeMidpoints = 2,
    ModulusPairs = 3,
    OptimizerRestart = 4,
    Controls = 5,
    Generic = 6,
}

/// Builds the keystream for `(seed, trial, level, purpose)`.
pub fn stream(seed: u64, trial: u64, level: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(&u64::from(level).to_le_bytes());
    key[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[inline]
pub fn normal<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

//! Collisional simulation of colored quantum noise.
//!
//! A probe sweeps through a one-dimensional Bose-Hubbard environment prepared
//! in its ground state, colliding with one site at a time. The environment's
//! spatial correlations act on the probe as time-correlated noise; fitting a
//! second-order memory-kernel master equation to the probe trajectory recovers
//! the environment's correlation length.

pub mod collision;
pub mod correlations;
pub mod dmrg;
pub mod error;
pub mod fit;
pub mod lattice;
pub mod master_eq;
pub mod mps;
pub mod parallel;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testing;

pub use error::{Error, Result};

use rand::{RngCore, SeedableRng};

/// Seed for item `index` of a batch run under `global`: the first word of
/// stream `index` of a ChaCha8 generator seeded with `global`.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index);
    rng.next_u64()
}

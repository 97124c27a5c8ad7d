//! Counter-mode seed derivation.
//!
//! Every random stream in an experiment is seeded by
//!
//! ```text
//! seed(base, role, index) = mix(mix(base) + (role << 32) + index)   (wrapping u64 add)
//! mix(z): z += 0x9E3779B97F4A7C15;
//!         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!         z ^ (z >> 31)
//! ```
//!
//! `mix` (the SplitMix64 output function) is a bijection on `u64`, so for a
//! fixed base, distinct `(role, index < 2^32)` pairs never collide.

use serde::{Deserialize, Serialize};

/// Purpose of a derived stream; the discriminant is the `role` in the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Network = 1,
    Sequence = 2,
    Neuron = 3,
}

pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, role: Role, index: u32) -> u64 {
    mix(mix(base).wrapping_add(((role as u64) << 32) + index as u64))
}

/// Seeds for one (network, sequence) run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunSeeds {
    pub network: usize,
    pub sequence: usize,
    pub network_seed: u64,
    pub sequence_seed: u64,
}

/// All `n_networks × n_sequences` runs, network-major. Sequence `j` uses the
/// same signal realisation for every network.
pub fn seed_schedule(base_seed: u64, n_networks: usize, n_sequences: usize) -> Vec<RunSeeds> {
    let mut out = Vec::with_capacity(n_networks * n_sequences);
    for i in 0..n_networks {
        for j in 0..n_sequences {
            out.push(RunSeeds {
                network: i,
                sequence: j,
                network_seed: derive(base_seed, Role::Network, i as u32),
                sequence_seed: derive(base_seed, Role::Sequence, j as u32),
            });
        }
    }
    out
}

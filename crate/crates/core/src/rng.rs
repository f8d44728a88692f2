//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed. Sub-seeds are derived with a SplitMix64 fold so that they are stable
//! across platforms and compiler versions (unlike `std`'s hashers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`, producing a well-mixed child seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed.wrapping_add(GOLDEN)), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(GOLDEN)))
    })
}

/// Stable 64-bit tag for a short label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One independent stream per agent, all keyed by the same run seed.
///
/// Streams are selected with ChaCha's stream counter, so agent `n`'s draws do
/// not depend on how many draws any other agent made.
pub fn agent_rngs(seed: u64, n_agents: usize) -> Vec<SimRng> {
    (0..n_agents)
        .map(|agent| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(agent as u64);
            rng
        })
        .collect()
}

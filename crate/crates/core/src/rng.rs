//! Counter-style stream derivation.
//!
//! Every random draw in a simulation is addressed by `(master seed, replica,
//! step, channel)`. The master seed and replica select a ChaCha key; step and
//! channel select one of its 2^64 streams. Within a stream, draws are consumed
//! in canonical lattice order, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Address of one noise slice: which replica and which time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath {
    pub master: u64,
    pub replica: u64,
    pub step: u64,
}

impl SeedPath {
    pub fn new(master: u64, replica: u64, step: u64) -> Self {
        Self { master, replica, step }
    }

    /// Independent generator for one channel of this slice.
    pub fn channel_rng(&self, channel: usize) -> ChaCha8Rng {
        derive_rng(self.master, self.replica, (self.step << 16) | channel as u64)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed by `(master, replica)` positioned on stream `stream`.
pub fn derive_rng(master: u64, replica: u64, stream: u64) -> ChaCha8Rng {
    let mut state = master ^ replica.wrapping_mul(0xD605_BBB5_8C8A_BBCB);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

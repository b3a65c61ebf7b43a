//! Seeded, splittable random streams.
//!
//! Every stochastic operation in the crate takes an explicit `&mut impl Rng`.
//! Independent streams are derived from a root seed and a path of integers
//! (for example `[trial_index, STREAM_BEACONS]`), so results never depend on
//! the order in which parallel workers are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream from `seed` and a path of labels.
pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    let mut state = seed ^ 0x0005_EED0_FC00_C10C;
    for (depth, &label) in path.iter().enumerate() {
        let mixed = splitmix64(&mut state);
        state = mixed ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(depth as u32 + 1);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    SimRng::from_seed(bytes)
}

/// Stream labels used by the simulation engine.
pub mod label {
    pub const WORLD: u64 = 1;
    pub const MOBILITY: u64 = 2;
    pub const BEACONS: u64 = 3;
    pub const ATTACKS: u64 = 4;
    pub const CORRUPTION: u64 = 5;
    pub const FRAMES: u64 = 6;
    pub const TABLE: u64 = 7;
    pub const GEOMETRY: u64 = 8;
    pub const UPLOADERS: u64 = 9;
}

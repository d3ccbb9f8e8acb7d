//! Seeded random substreams.
//!
//! Every random quantity in the crate is drawn from a [`SimRng`] obtained
//! through [`substream`]. A substream is addressed by a master seed and a path
//! of integer labels (replication index, bootstrap draw index, purpose tag);
//! the labels are folded into a 64-bit seed with the SplitMix64 finalizer, so
//! two different paths give statistically independent ChaCha8 streams and the
//! same path always gives the same stream. Results therefore do not depend on
//! thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the stream addressed by `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    let mut state = splitmix64(seed);
    for &label in path {
        state = splitmix64(state ^ splitmix64(label.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Draw a fresh 64-bit key from `rng`, used as the master seed for a batch of
/// per-item substreams.
pub fn fork_key(rng: &mut SimRng) -> u64 {
    rng.next_u64()
}

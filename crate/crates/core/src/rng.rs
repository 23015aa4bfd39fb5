//! Deterministic per-path random number streams.
//!
//! Each sample path gets its own stream keyed by `(root_seed, stream_id)`.
//! The stream seed is derived with SplitMix64, which avalanches the counter
//! so that nearby ids yield unrelated ChaCha keys. Because a path's stream
//! depends only on the key and never on scheduling, results are identical
//! for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 step: advances `state` and returns the mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 256-bit ChaCha seed from `(root_seed, stream_id)`.
fn derive_seed(root_seed: u64, stream_id: u64) -> [u8; 32] {
    // Fold the stream id in before expanding, so distinct ids diverge fully.
    let mut id_state = stream_id;
    let mixed_id = splitmix64(&mut id_state);
    let mut state = (root_seed ^ 0x6a09_e667_f3bc_c908).wrapping_add(mixed_id);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Returns the deterministic RNG stream for one path of one run.
///
/// `stream_id` is usually the path index; component processes that need
/// several independent coordinates per path offset the id space.
pub fn path_stream(root_seed: u64, stream_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(root_seed, stream_id))
}

/// Identifies the RNG lineage of a generated batch, for reproducibility
/// records in reports.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedLineage {
    /// Root seed of the run.
    pub root_seed: u64,
    /// First stream id used (paths occupy `[stream_base, stream_base + n)`).
    pub stream_base: u64,
}

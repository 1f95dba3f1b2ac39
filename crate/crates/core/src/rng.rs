//! Counter-based random streams keyed by `(seed, trace_id, purpose)`.
//!
//! Every Monte Carlo trace draws from its own ChaCha stream, so results do not
//! depend on the order in which traces are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Each purpose gets a disjoint stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Plant = 0,
    Channel = 1,
    Withholding = 2,
    Instance = 3,
}

const PURPOSES: u64 = 4;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, trace_id: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trace_id.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}

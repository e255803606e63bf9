//! Random streams for simulation.
//!
//! The generator is ChaCha12 (`rand_chacha::ChaCha12Rng`). Replication `r` of
//! a setting uses the 64-bit seed with stream id `r` plus a per-setting
//! offset, so every replication has its own independent stream, fixed
//! regardless of which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Seeded random streams.
//!
//! Every trial owns one master seed. Components draw from separate named
//! streams of the same seed so that, for example, swapping the state model
//! leaves the environment's random draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Named streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Policy = 2,
    Model = 3,
    Explore = 4,
    Trial = 5,
}

/// A generator for `stream` of `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-trial master seed derived from an experiment seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(Stream::Trial as u64);
    rng.set_word_pos(u128::from(trial) * 2);
    rng.next_u64()
}

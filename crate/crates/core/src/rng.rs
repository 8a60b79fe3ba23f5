//! Deterministic random streams derived from one master seed.
//!
//! Every stage of an experiment draws from its own ChaCha stream, so turning
//! one stage on or off never shifts the numbers another stage sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    DataCollection = 1,
    MetaTraining = 2,
    Bo = 3,
    TestTasks = 4,
    Evaluation = 5,
    Tuning = 6,
}

pub fn stream(master: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(which as u64);
    rng
}

/// Seed for meta-training, which seeds its own generator.
pub fn meta_seed(master: u64) -> u64 {
    stream(master, Stream::MetaTraining).random()
}

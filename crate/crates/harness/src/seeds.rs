//! Counter-based random streams.
//!
//! Every consumer gets its own ChaCha stream keyed by `(master seed, domain)`
//! and selected by an index such as the task id, so results for one task do
//! not depend on how many tasks precede it or on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    SuiteShared,
    SuiteTask,
    Session,
    Adapter,
    Theory,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::SuiteShared => 1,
            Domain::SuiteTask => 2,
            Domain::Session => 3,
            Domain::Adapter => 4,
            Domain::Theory => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for `(seed, domain)` without drawing from any stream.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ domain.tag().rotate_left(56)) ^ index)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ domain.tag().rotate_left(56)));
    rng.set_stream(index);
    rng
}

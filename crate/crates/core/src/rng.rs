//! Seeded random streams. Every consumer of randomness in a run gets its own
//! ChaCha stream derived from the run seed, so one phase drawing more or
//! fewer numbers never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) const SHUFFLE: u64 = 0;
pub(crate) const TIES: u64 = 1;
pub(crate) const LOCAL_SEARCH_INITIAL: u64 = 2;
pub(crate) const LOCAL_SEARCH_REPAIR: u64 = 3;
pub(crate) const GENERATOR: u64 = 4;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Seed derivation. Every random stream in a run is keyed by the master seed
//! plus a purpose tag and coordinates, so results never depend on the order in
//! which clients happen to be processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix(master ^ splitmix(tag));
    for &c in coords {
        h = splitmix(h ^ c);
    }
    h
}

pub fn stream(master: u64, tag: u64, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tag, coords))
}

pub(crate) mod tags {
    pub const SYNTH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const NONZERO_SPLIT: u64 = 3;
    pub const VERTICAL: u64 = 4;
    pub const SCHEDULE: u64 = 5;
    pub const CYCLIC: u64 = 6;
    pub const LOCAL_SAMPLES: u64 = 7;
    pub const SGD: u64 = 8;
    pub const CENTRAL: u64 = 9;
    pub const SEARCH: u64 = 10;
}

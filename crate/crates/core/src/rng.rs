//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream addressed by a
//! master seed plus a tuple of coordinates (purpose, epoch, split, sample,
//! neuron, ...). The coordinates are hashed into a ChaCha stream id, so the
//! numbers a given cell sees do not depend on evaluation order or on how many
//! workers share the job.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags keep unrelated consumers of the same seed apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Subset = 1,
    Init = 2,
    Counts = 3,
    Camera = 4,
    PhaseNoise = 5,
    Sweep = 6,
}

/// Address of one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub coords: [u64; 4],
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        StreamKey {
            seed,
            purpose,
            coords: [0; 4],
        }
    }

    pub fn at(mut self, coords: [u64; 4]) -> Self {
        self.coords = coords;
        self
    }

    pub fn stream(&self) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut id = mix(self.purpose as u64);
        for c in self.coords {
            id = mix(id ^ c.wrapping_add(0x9e37_79b9_7f4a_7c15));
        }
        rng.set_stream(id);
        rng
    }
}

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, coords: [u64; 4]) -> Stream {
    StreamKey::new(seed, purpose).at(coords).stream()
}

//! Seed derivation for reproducible random streams.
//!
//! Every random draw in the simulator comes from a stream keyed by
//! `(root seed, purpose, index)`, so the values a query or bidder receives do
//! not depend on generation order or on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. The discriminant is mixed into the seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Run = 1,
    RunParameters = 2,
    LeafAssignment = 3,
    SetFeature = 4,
    QueryFeature = 5,
    BidderFeature = 6,
    BidderTcpa = 7,
    ValueNoise = 8,
    Cost = 9,
    SlotCtr = 10,
    Reserve = 11,
    BidderSpec = 12,
    QuerySpec = 13,
}

/// A 64-bit seed from which child seeds and generators are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamSeed {
    pub const fn new(seed: u64) -> Self {
        StreamSeed(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Child seed for `(purpose, index)`.
    pub fn derive(self, purpose: Purpose, index: u64) -> StreamSeed {
        let a = splitmix64(self.0 ^ splitmix64(purpose as u64));
        StreamSeed(splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    pub fn rng(self) -> Stream {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn stream(self, purpose: Purpose, index: u64) -> Stream {
        self.derive(purpose, index).rng()
    }
}

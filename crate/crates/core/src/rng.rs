//! Counter-based random streams.
//!
//! Every stochastic operation receives a [`SeedStream`] and derives child
//! streams from it by index or by name. A particle's draws depend only on
//! the root seed and its index path, never on scheduling, so parallel and
//! serial execution produce identical batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator handed to models and samplers.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream {
            key: splitmix64(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream at position `index`.
    pub fn child(&self, index: u64) -> Self {
        SeedStream {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Child stream identified by a name (e.g. "engine", "oracle").
    pub fn named(&self, name: &str) -> Self {
        self.child(fnv1a(name))
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

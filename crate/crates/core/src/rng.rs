//! Counter-based seed splitting.
//!
//! Every random stream is addressed by `(root seed, domain, index)`. The root
//! seeds a ChaCha key, and the domain/index pair selects one of its 2^64
//! independent streams, so any component can be re-run in isolation without
//! replaying the draws that precede it elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Domain {
    Mode = 1,
    Tree = 2,
    Placement = 3,
    Policy = 4,
    Init = 5,
    Shuffle = 6,
    Collect = 7,
    Eval = 8,
    Oracle = 9,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Generator for `index` within `domain`.
    pub fn rng(&self, domain: Domain, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        // 16 bits of domain, 48 bits of index.
        rng.set_stream(((domain as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
        rng
    }

    /// A child root seed, used to derive seeds for nested components.
    pub fn child(&self, domain: Domain, index: u64) -> SeedStream {
        use rand::RngCore;
        SeedStream::new(self.rng(domain, index).next_u64())
    }
}

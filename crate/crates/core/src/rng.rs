//! Counter-based random substreams.
//!
//! Every random draw in the simulator is addressed by a key: a root seed plus
//! a path of tags (trial index, parameter name, attempt counter, ...). The key
//! is hashed into a ChaCha8 seed, so a draw never depends on how many other
//! draws happened before it or on which thread made them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a label. Stable across platforms and compiler
/// versions, unlike `std::hash`.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A position in the substream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed))
    }

    pub fn with(self, tag: u64) -> Self {
        StreamKey(mix64(
            self.0 ^ mix64(tag.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }

    pub fn with_label(self, label: &str) -> Self {
        self.with(label_hash(label))
    }

    /// A derived 64-bit seed, for handing to components that take a plain seed.
    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Seed for a named experiment substream (`"stimulus"`, `"network"`, ...).
pub fn named_seed(seed: u64, name: &str) -> u64 {
    StreamKey::root(seed).with_label(name).seed()
}

//! Seed splitting.
//!
//! All randomness flows from one master seed. Each consumer derives its own
//! stream from `(master, tag, index)` with a SplitMix64-style mixer, so adding
//! draws in one stream never shifts the draws of another, and shot `k` gets
//! the same stream no matter how shots are batched across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Engine RNG used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// Named sub-stream tags.
pub mod tags {
    pub const SHOTS: u64 = super::tag(b"shots");
    pub const CONDITIONAL_INIT: u64 = super::tag(b"conditional-init");
    pub const FRAMES: u64 = super::tag(b"frames");
    pub const BASELINE: u64 = super::tag(b"baseline-walk");
    pub const SAMPLING: u64 = super::tag(b"sampling");
    pub const QPN: u64 = super::tag(b"qpn");
    pub const RATES: u64 = super::tag(b"random-rates");
    pub const LAYOUT: u64 = super::tag(b"layout");
}

/// FNV-1a hash of a tag name, usable in const context.
pub const fn tag(name: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < name.len() {
        h ^= name[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed of sub-stream `(tag, index)` of `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ tag) ^ index)
}

/// RNG for sub-stream `(tag, index)` of `master`.
pub fn stream_rng(master: u64, tag: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, index))
}

//! Seed derivation. Every random stream in a run is derived from the run
//! seed with [`mix`], a SplitMix64 finalizer over `seed ^ (stream * φ64)`.

/// Derives an independent 64-bit seed for `stream` from `seed`.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of stream ids, e.g. `(step, group, rollout)`.
pub fn mix_all(seed: u64, streams: &[u64]) -> u64 {
    streams.iter().fold(seed, |s, &k| mix(s, k))
}

/// Named stream ids used by the pipeline stages.
pub mod streams {
    pub const CORPUS: u64 = 0xC0;
    pub const SFT: u64 = 0x5F;
    pub const RL: u64 = 0x21;
    pub const EVAL: u64 = 0xE7;
    pub const INIT: u64 = 0x11;
    pub const ANALYSIS: u64 = 0xA2;
}

//! Deterministic seed derivation.
//!
//! Every random draw in this crate comes from a ChaCha stream seeded through
//! these mixers, so a run is reproducible from a single master seed while
//! distinct uses (network init, shuffling, per-utterance generation) get
//! decorrelated streams.

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed for stream `stream` of generator `seed`.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Derives a sub-seed keyed by a string tag (language pair, file role, ...).
pub fn mix_str(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(seed, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_deterministic_and_stream_sensitive() {
        assert_eq!(mix(7, 1), mix(7, 1));
        assert_ne!(mix(7, 1), mix(7, 2));
        assert_ne!(mix(7, 1), mix(8, 1));
    }

    #[test]
    fn mix_str_distinguishes_tags() {
        assert_eq!(mix_str(42, "ceb->tel"), mix_str(42, "ceb->tel"));
        assert_ne!(mix_str(42, "ceb->tel"), mix_str(42, "tel->ceb"));
    }
}

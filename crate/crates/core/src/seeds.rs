//! Deterministic seed derivation.
//!
//! Every source of randomness in the pipeline owns a rng seeded from the
//! run's master seed mixed with its coordinates (epoch, pass, vertex,
//! question id, …). Work items therefore draw from independent streams, so
//! parallel and sequential execution consume randomness identically and
//! produce bitwise-equal results.

/// Mix a list of values into one seed (splitmix64 finalizer per part,
/// folded with an FNV-style multiply).
pub fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        h = (h ^ z).wrapping_mul(0x1000_0000_01B3);
    }
    h
}

/// Mix a seed with a string key (FNV-1a over the bytes, then [`mix`]).
pub fn mix_str(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in key.as_bytes() {
        h = (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(&[seed, h])
}

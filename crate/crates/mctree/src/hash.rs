//! Tiny stable hashing helpers.
//!
//! The standard library hashers are not guaranteed stable across releases,
//! but log headers and synthetic noise must reproduce bit-for-bit forever.
//! FNV-1a plus a splitmix64 finalizer is plenty for both.

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic value in [-1, 1] derived from a seed and a byte string.
pub fn unit_noise(seed: u64, bytes: &[u8]) -> f64 {
    let h = splitmix64(seed ^ fnv1a64(bytes));
    // 53 mantissa bits, mapped from [0, 1) to [-1, 1).
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
    unit * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_known_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let a = unit_noise(7, b"#pragma clang loop(i) parallelize_thread");
        let b = unit_noise(7, b"#pragma clang loop(i) parallelize_thread");
        assert_eq!(a, b);
        assert!((-1.0..1.0).contains(&a));
        let c = unit_noise(8, b"#pragma clang loop(i) parallelize_thread");
        assert_ne!(a, c);
    }
}

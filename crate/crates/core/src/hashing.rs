//! Feature hashing into the 2^d weight space.
//!
//! Keys are hashed with 64-bit FNV-1a over `namespace || 0x1F || payload`
//! and masked to the low d bits. No sign hashing: colliding features add.

pub const FNV_OFFSET: u64 = 0xcbf29ce484222325;
pub const FNV_PRIME: u64 = 0x100000001b3;

/// Namespace separates template kinds (e.g. "emit" vs "trans") so equal
/// payloads from different templates land on independent indices. The 0x1F
/// unit separator keeps the encoding injective as long as namespaces do not
/// contain 0x1F, which is why namespaces are restricted to short ASCII tags.
#[derive(Clone, Copy, Debug)]
pub struct FeatureKey<'a> {
    pub namespace: &'a str,
    pub payload: &'a [u8],
}

#[inline]
pub fn fnv1a64_update(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[inline]
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_update(FNV_OFFSET, bytes)
}

/// Hashes a key into [0, 2^hash_bits). Requires 1 <= hash_bits <= 30.
#[inline]
pub fn hash_feature(key: FeatureKey<'_>, hash_bits: u32) -> u32 {
    assert!((1..=30).contains(&hash_bits), "hash_bits out of range");
    let mut h = fnv1a64(key.namespace.as_bytes());
    h = fnv1a64_update(h, &[0x1F]);
    h = fnv1a64_update(h, key.payload);
    (h & ((1u64 << hash_bits) - 1)) as u32
}

// SplitMix64 finaliser; used to derive independent per-sample streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from `(master, index, tag)`.
///
/// The result depends only on the three inputs, so samples can be generated
/// in any order (or in parallel) and still be reproducible.
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    mix(mix(mix(master) ^ index) ^ tag.rotate_left(32))
}

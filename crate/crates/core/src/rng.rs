use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Combines a base seed with a stream discriminator into a fresh generator.
pub fn stream(seed: u64, discriminator: u64) -> Rng {
    Rng::seed_from_u64(mix(seed, discriminator))
}

/// Mixes two words into one (splitmix64 finalizer on the combined value).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix_f64(seed: u64, values: &[f64]) -> u64 {
    values.iter().fold(seed, |acc, v| mix(acc, v.to_bits()))
}

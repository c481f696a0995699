use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded stream keyed by a base seed and a list of stream coordinates
/// (learner index, round, ...). Distinct keys give independent streams.
pub(crate) fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    // splitmix64 over the key
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &k in key {
        h = mix(h ^ k.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    ChaCha8Rng::seed_from_u64(mix(h))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

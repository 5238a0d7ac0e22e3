use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent stream from a base seed and a list of stream ids.
///
/// Used so that e.g. the dropout masks of epoch 3, batch 7, recording 2 do
/// not depend on how many random draws happened before them.
pub(crate) fn stream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &id in ids {
        h = splitmix(h ^ splitmix(id));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single derived `u64`, e.g. a per-recording dropout seed.
pub(crate) fn derive(seed: u64, ids: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, ids).next_u64()
}

//! Counter-based random streams: one independent stream per logical task.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed used when the caller does not provide one.
pub const DEFAULT_SEED: u64 = 20_240_917;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the task identified by `path` under `seed`. Distinct paths
/// select distinct ChaCha streams, so adding tasks never shifts the draws of
/// existing ones.
pub fn task_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let stream = path.iter().fold(0x5EED_u64, |acc, p| splitmix(acc ^ splitmix(*p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

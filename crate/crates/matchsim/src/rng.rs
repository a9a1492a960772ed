//! Seeding and draw-protocol helpers.
//!
//! All randomness flows through `ChaCha8` streams seeded from a 64-bit
//! seed. Replication r of a run uses `replication_seed(seed, r)`, a
//! SplitMix64 mix of the base seed and the replication index, so that
//! replication streams can be consumed in any order (and in parallel)
//! without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for replication `r` of a run with base `seed`.
pub fn replication_seed(seed: u64, r: u64) -> u64 {
    splitmix64(seed ^ splitmix64(r.wrapping_add(1)))
}

/// The generator family fixed by the draw protocol.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Inverse-CDF draw of a 1-based type label from a weight slice.
/// Consumes exactly one uniform f64.
pub fn draw_categorical(weights: &[f64], rng: &mut impl rand::Rng) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return idx + 1;
        }
    }
    // u landed in the rounding slack past the last positive weight
    weights
        .iter()
        .rposition(|w| *w > 0.0)
        .map(|idx| idx + 1)
        .unwrap_or(weights.len())
}

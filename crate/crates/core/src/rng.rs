//! Seeded randomness. Every draw comes from ChaCha8 keyed by a 64-bit seed
//! with the call index as the stream number, so any single draw can be
//! reproduced without replaying the ones before it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Mixed into random-policy seeds so policy draws never coincide with the
/// simulated user's draws under the same trial seed.
pub(crate) const POLICY_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in [0, 1) from the top 53 bits.
pub(crate) fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn index(rng: &mut impl RngCore, n: usize) -> usize {
    ((unit(rng) * n as f64) as usize).min(n - 1)
}

/// Inverse-CDF draw from a finite distribution.
pub(crate) fn categorical(rng: &mut impl RngCore, probs: &[f64]) -> usize {
    let u = unit(rng) * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

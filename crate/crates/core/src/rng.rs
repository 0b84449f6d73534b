//! Keyed deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by a
//! `(seed, stream)` pair. ChaCha is counter based, so a stream can be
//! regenerated independently by any simulated learner, and bounded draws use
//! 64-bit arithmetic only, which keeps sequences identical across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream namespaces. Keeping them apart means, for example, that the
/// permutation of epoch 3 never shares a stream with the toy dataset.
pub(crate) mod domain {
    pub const PERMUTATION: u64 = 0x7065_726d;
    pub const DATASET_BYTES: u64 = 0x6279_7465;
    pub const TOY_DATA: u64 = 0x746f_7964;
    pub const BALLS: u64 = 0x6261_6c6c;
    pub const COUNTS: u64 = 0x636e_7473;
}

/// SplitMix64 finalizer, used to fold a domain tag into a user seed.
pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn keyed(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain)));
    rng.set_stream(stream);
    rng
}

/// Uniform draw from `[0, upper)` by Lemire's multiply-and-reject method.
pub(crate) fn below(rng: &mut impl RngCore, upper: u64) -> u64 {
    debug_assert!(upper > 0);
    let mut m = u128::from(rng.next_u64()) * u128::from(upper);
    let mut low = m as u64;
    if low < upper {
        let threshold = upper.wrapping_neg() % upper;
        while low < threshold {
            m = u128::from(rng.next_u64()) * u128::from(upper);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// Uniform draw from `[0, 1)` with 53 bits of precision.
pub(crate) fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

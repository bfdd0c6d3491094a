//! Deterministic seed derivation.
//!
//! All randomness in the crate flows through explicit `u64` seeds. Derived
//! seeds (per session, per argument, per estimator) are produced by mixing
//! the parent seed with a salt through splitmix64 so that independent tasks
//! get independent streams while remaining reproducible.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from `master` and a salt.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt))
}

/// Derives an independent seed from `master` and two salts.
pub fn derive_seed2(master: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(master, a), b)
}

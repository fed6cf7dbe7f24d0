//! Keyed random streams.
//!
//! Every random quantity in the pipeline is drawn from a ChaCha stream keyed by
//! `(seed, domain, id)`, where `id` is the entity that owns the draw (a vertex,
//! an SDE path, a tree replicate). Results therefore do not depend on how work
//! is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Separates independent uses of the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Graph = 1,
    InitialMessage = 2,
    Rounding = 3,
    SdePath = 4,
    Auxiliary = 5,
    Tree = 6,
    Population = 7,
    Optimizer = 8,
    Oracle = 9,
    Bench = 10,
}

/// SplitMix64 finalizer, used only to derive ChaCha keys.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for entity `id` of `domain`.
pub fn stream(seed: u64, domain: Domain, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain as u64)));
    rng.set_stream(id);
    rng
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on `[-1, 1)`.
#[inline]
pub fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

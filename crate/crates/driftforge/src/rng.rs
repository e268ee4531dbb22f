//! Seed derivation and sampling helpers shared across the crate.
//!
//! Every stochastic component owns a [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so independent components (experiment cells, GAN bank
//! entries, per-period role shuffles) stay reproducible regardless of
//! execution order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream of context words into a new seed.
///
/// SplitMix64 finalizer applied per word; cheap, stable across platforms.
pub fn derive_seed(base: u64, context: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &word in context {
        state = state.wrapping_add(word).wrapping_add(0x9e37_79b9_7f4a_7c15);
        state = splitmix64(state);
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG seeded from a base seed plus context words.
pub fn rng_from(base: u64, context: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, context))
}

/// Standard normal draw via Box-Muller on two uniform variates.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - u maps [0,1) to (0,1] so the log stays finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform draw from `[-limit, limit]`.
pub fn uniform_symmetric(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * limit
}

/// Random unit vector of the given dimension.
pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Sample `count` indices uniformly without replacement from `0..n`.
///
/// Partial Fisher-Yates; returns all of `0..n` (shuffled) when `count >= n`.
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let take = count.min(n);
    for i in 0..take {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool
}

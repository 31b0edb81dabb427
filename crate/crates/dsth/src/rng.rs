//! Seeded randomness. Every stochastic stage derives its own stream from the
//! single top-level seed through a named sub-seed, so full pipelines are
//! reproducible end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;
use crate::scalar::Real;

/// Derives a deterministic sub-seed for a named pipeline stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    // SplitMix64 over the seed and the stage-name bytes.
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &b in stage.as_bytes() {
        state = mix(state.wrapping_add(b as u64));
    }
    mix(state)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream cipher RNG used throughout; stable across platforms.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal matrix draw.
pub fn gaussian_matrix<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = T::from_f64_lossy(g);
    }
    m
}

/// Standard-normal vector draw.
pub fn gaussian_vec<T: Real>(len: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..len)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            T::from_f64_lossy(g)
        })
        .collect()
}

/// Samples `k` distinct indices from `0..n` uniformly, in draw order.
pub fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(k <= n);
    // Partial Fisher-Yates over an index vector.
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

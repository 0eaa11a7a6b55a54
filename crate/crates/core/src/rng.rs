//! Seeded randomness with a fully specified stream.
//!
//! The generator is xoshiro256** seeded through splitmix64. Shuffles and
//! bounded draws are implemented here (not delegated to `rand`'s sampling
//! helpers) so the exact sequence is pinned independent of crate versions.

use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type SeededRng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Uniform integer in `0..bound` (Lemire's nearly-divisionless method).
pub fn below(rng: &mut impl RngCore, bound: u64) -> u64 {
    assert!(bound > 0, "bound must be positive");
    let mut m = u128::from(rng.next_u64()) * u128::from(bound);
    let mut low = m as u64;
    if low < bound {
        let threshold = bound.wrapping_neg() % bound;
        while low < threshold {
            m = u128::from(rng.next_u64()) * u128::from(bound);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

pub fn index(rng: &mut impl RngCore, len: usize) -> usize {
    below(rng, len as u64) as usize
}

/// Uniform float in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fisher-Yates, walking from the back.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// `k` distinct indices from `0..n`, via a partial Fisher-Yates.
pub fn sample_indices(rng: &mut impl RngCore, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn normal(rng: &mut impl RngCore) -> f64 {
    loop {
        let u1 = unit_f64(rng);
        if u1 > 0.0 {
            let u2 = unit_f64(rng);
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

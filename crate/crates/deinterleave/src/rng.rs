//! Seeded random number generation shared by every stochastic component.
//!
//! All randomness flows through [`SimRng`], a thin wrapper over the ChaCha8
//! stream cipher. The wrapper pins down exactly how raw 64-bit draws map to
//! floats, bounded integers, categorical samples and subsets, so a given seed
//! reproduces the same decisions on every platform and in every build.
//!
//! Independent sub-streams (one per experiment realization, one per dataset
//! split, ...) are derived with [`derive_seed`], which mixes a path of integer
//! tags into the master seed. Two distinct tag paths yield unrelated streams.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 output function. Bijective mixer used for seed derivation.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of an independent child stream from a master seed and a
/// path of integer tags, e.g. `[case, realization, purpose]`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &tag in path {
        s = splitmix64(s ^ splitmix64(tag));
    }
    s
}

/// Deterministic random source for simulation, scenario generation and
/// network initialization.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for the child seed `derive_seed(master, path)`.
    pub fn child(master: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(master, path))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`: the top 53 bits of one raw draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`. Consumes one raw draw.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` via widening-multiply reduction of one raw
    /// draw.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index: empty range");
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Inverse-CDF sample from a row of nonnegative weights, scanning left to
    /// right. Consumes exactly one draw. Returns `None` when the row has no
    /// positive mass. A draw landing past the accumulated total (possible when
    /// the row sums slightly below 1) falls back to the last positive entry.
    pub fn sample_row(&mut self, row: &[f64]) -> Option<usize> {
        let u = self.next_f64();
        let mut cum = 0.0;
        let mut last = None;
        for (i, &w) in row.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            cum += w;
            last = Some(i);
            if u < cum {
                return Some(i);
            }
        }
        last
    }

    /// Samples `k` distinct values from `0..n`, returned ascending. Partial
    /// Fisher-Yates shuffle; consumes exactly `k` draws.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "subset: k={k} out of range for n={n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }
}

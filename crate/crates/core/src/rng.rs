//! Counter-addressed random streams.
//!
//! A stream is a pure function of `(root_seed, path)`: the pair is hashed into
//! a ChaCha8 key, so any worker can rebuild the stream for a logical task
//! (iteration, sample index, purpose) without sharing generator state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Purpose tags appended to stream paths so that sibling decisions never share draws.
pub mod tags {
    pub const PAIR: u64 = 0x5041_4952;
    pub const BRANCH: u64 = 0x4252_4e43;
    pub const PARTNER: u64 = 0x5052_544e;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const EPOCH: u64 = 0x4550_4f43;
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const DIVERSITY: u64 = 0x4449_5652;
    pub const BASIC: u64 = 0x4241_5343;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Builds the stream addressed by `(root_seed, path)`.
    pub fn derive(root_seed: u64, path: &[u64]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"msaug-stream-v1");
        hasher.update(root_seed.to_le_bytes());
        hasher.update((path.len() as u64).to_le_bytes());
        for p in path {
            hasher.update(p.to_le_bytes());
        }
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            root_seed,
            path: path.to_vec(),
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Fresh stream at `path ++ [tag]`. Independent of how much of `self` was consumed.
    pub fn child(&self, tag: u64) -> Self {
        let mut path = self.path.clone();
        path.push(tag);
        Self::derive(self.root_seed, &path)
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::arg(format!("invalid uniform range [{lo}, {hi})")));
        }
        loop {
            let v = lo + (hi - lo) * self.unit();
            // rounding can land exactly on `hi`
            if v < hi {
                return Ok(v);
            }
        }
    }

    /// Uniform draw in the open interval `(lo, hi)`.
    pub fn uniform_open(&mut self, lo: f64, hi: f64) -> Result<f64> {
        loop {
            let v = self.uniform(lo, hi)?;
            if v > lo {
                return Ok(v);
            }
        }
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.rng.random_range(0..n)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn between(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "between({lo}, {hi})");
        self.rng.random_range(lo..=hi)
    }

    /// Symmetric `Beta(alpha, alpha)` draw.
    pub fn beta(&mut self, alpha: f64) -> Result<f64> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::arg(format!("beta parameter {alpha} must be positive")));
        }
        let dist = Beta::new(alpha, alpha).map_err(|e| Error::arg(e.to_string()))?;
        Ok(dist.sample(&mut self.rng).clamp(0.0, 1.0))
    }

    /// `k` distinct indices from `0..set_size`, in draw order. Every subset is equally likely.
    pub fn choose_k(&mut self, set_size: usize, k: usize) -> Result<Vec<usize>> {
        if k > set_size {
            return Err(Error::arg(format!(
                "cannot choose {k} elements from a set of {set_size}"
            )));
        }
        let mut pool: Vec<usize> = (0..set_size).collect();
        for i in 0..k {
            let j = i + self.below(set_size - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0
        {
            return Err(Error::arg(format!("invalid weights {weights:?}")));
        }
        let mut target = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return Ok(i);
            }
            target -= w;
        }
        Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(0))
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(s: &mut RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn same_path_same_sequence() {
        let a = draws(&mut RngStream::derive(7, &[0, 0]), 100);
        let b = draws(&mut RngStream::derive(7, &[0, 0]), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn different_paths_differ() {
        let a = draws(&mut RngStream::derive(7, &[0, 0]), 100);
        let b = draws(&mut RngStream::derive(7, &[0, 1]), 100);
        let c = draws(&mut RngStream::derive(8, &[0, 0]), 100);
        // a path prefix is not the same address
        let d = draws(&mut RngStream::derive(7, &[0]), 100);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn child_ignores_consumption() {
        let mut s = RngStream::derive(1, &[2]);
        let fresh = draws(&mut s.child(9), 10);
        s.unit();
        assert_eq!(draws(&mut s.child(9), 10), fresh);
        assert_eq!(s.child(9).path(), &[2, 9]);
    }

    #[test]
    fn uniform_mean_and_range() {
        let mut s = RngStream::derive(11, &[]);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = s.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&v));
            sum += v;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
        for _ in 0..10_000 {
            let v = s.uniform(0.2, 0.8).unwrap();
            assert!((0.2..0.8).contains(&v));
        }
    }

    #[test]
    fn uniform_degenerate_range_errors() {
        let mut s = RngStream::derive(0, &[]);
        assert!(matches!(s.uniform(0.5, 0.5), Err(Error::Argument(_))));
        assert!(s.uniform(0.8, 0.2).is_err());
    }

    #[test]
    fn beta_rejects_nonpositive() {
        let mut s = RngStream::derive(0, &[]);
        assert!(s.beta(0.0).is_err());
        assert!(s.beta(-1.0).is_err());
    }

    #[test]
    fn beta_moments() {
        for &alpha in &[1.0f64, 0.2] {
            let mut s = RngStream::derive(3, &[alpha.to_bits()]);
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| s.beta(alpha).unwrap()).collect();
            assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let expected = 1.0 / (4.0 * (2.0 * alpha + 1.0));
            assert!((mean - 0.5).abs() < 0.01, "alpha {alpha} mean {mean}");
            assert!((var - expected).abs() < 0.1 * expected, "alpha {alpha} var {var}");
        }
    }

    #[test]
    fn choose_k_contracts() {
        let mut s = RngStream::derive(5, &[]);
        let mut all = s.choose_k(5, 5).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        for _ in 0..1000 {
            let pick = s.choose_k(14, 2).unwrap();
            assert_eq!(pick.len(), 2);
            assert_ne!(pick[0], pick[1]);
            assert!(pick.iter().all(|&i| i < 14));
        }
        assert!(s.choose_k(3, 4).is_err());
        assert!(s.choose_k(0, 0).unwrap().is_empty());
    }

    #[test]
    fn choose_k_pairs_uniform() {
        let mut s = RngStream::derive(17, &[]);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let mut p = s.choose_k(3, 2).unwrap();
            p.sort_unstable();
            let idx = match (p[0], p[1]) {
                (0, 1) => 0,
                (0, 2) => 1,
                (1, 2) => 2,
                other => panic!("bad pair {other:?}"),
            };
            counts[idx] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn weighted_index_respects_zero_weights() {
        let mut s = RngStream::derive(2, &[]);
        for _ in 0..1000 {
            assert_ne!(s.weighted_index(&[1.0, 0.0, 1.0]).unwrap(), 1);
        }
        assert!(s.weighted_index(&[0.0, 0.0]).is_err());
    }
}

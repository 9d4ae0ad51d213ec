//! Deterministic derivation of independent RNG streams.
//!
//! Every consumer of randomness (dataset generation, each sampler, each
//! Monte Carlo diagnostic) gets its own stream derived from
//! `(master_seed, replicate_index, purpose_tag)`. The derivation hashes the
//! full tuple, so streams never collide and the draws for one purpose are
//! unaffected by whether any other purpose runs at all. In particular the
//! dataset stream of replicate `r` does not depend on which procedures are
//! evaluated, which is what makes paired cross-procedure comparisons valid.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the RNG stream for `(master_seed, replicate, purpose)`.
pub fn derive_stream(master_seed: u64, replicate: u64, purpose: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(replicate.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Purpose tag for the dataset of a given mixture fraction, keyed by the
/// exact bit pattern of `p` so that reordering or extending a p-grid never
/// changes the datasets drawn at a particular p.
pub fn data_purpose(p: f64, alt_tag: &str) -> String {
    format!("data/p={:016x}/alt={alt_tag}", p.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn deterministic_and_distinct() {
        let a: Vec<u64> = derive_stream(7, 3, "data").random_iter().take(8).collect();
        let b: Vec<u64> = derive_stream(7, 3, "data").random_iter().take(8).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = derive_stream(7, 3, "mcmc").random_iter().take(8).collect();
        assert_ne!(a, c);
        let d: Vec<u64> = derive_stream(7, 4, "data").random_iter().take(8).collect();
        assert_ne!(a, d);
        let e: Vec<u64> = derive_stream(8, 3, "data").random_iter().take(8).collect();
        assert_ne!(a, e);
    }

    // Streams for different purposes behave as independent uniform sources:
    // cross-correlation of 1e6 paired draws is within 4 sigma of zero and
    // each margin passes a coarse uniformity check.
    #[test]
    fn cross_purpose_independence() {
        let n = 1_000_000usize;
        let mut s1 = derive_stream(42, 0, "data");
        let mut s2 = derive_stream(42, 0, "mcmc");
        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        let mut sum12 = 0.0;
        let mut sq1 = 0.0;
        let mut sq2 = 0.0;
        for _ in 0..n {
            let u: f64 = s1.random();
            let v: f64 = s2.random();
            sum1 += u;
            sum2 += v;
            sum12 += u * v;
            sq1 += u * u;
            sq2 += v * v;
        }
        let nf = n as f64;
        let m1 = sum1 / nf;
        let m2 = sum2 / nf;
        let cov = sum12 / nf - m1 * m2;
        let v1 = sq1 / nf - m1 * m1;
        let v2 = sq2 / nf - m2 * m2;
        let corr = cov / (v1 * v2).sqrt();
        assert!(corr.abs() < 4.0 / nf.sqrt(), "corr = {corr}");
        assert!((m1 - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / nf.sqrt());
        assert!((m2 - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / nf.sqrt());
    }
}

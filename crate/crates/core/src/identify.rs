//! Kullback-Leibler diagnostics for mixture identifiability.
//!
//! For two candidate mixture models with densities f1 (true) and f2,
//! `K12 = E_1[log(f1/f2)]` and `V12 = E_1[(log(f1/f2))^2]`. The
//! log-likelihood-ratio statistic over m observations,
//! `D12 = sum_i log(f1(X_i)/f2(X_i))`, selects the wrong model when
//! `D12 < 0`; for large m its distribution is approximately normal with
//! mean `m K12` and variance `m (V12 - K12^2)`. Pairs of hard-to-tell-apart
//! models are built by matching marginal variances: a "full" confusion
//! (p2 = 1, tau2^2 = p tau1^2) and a "null" confusion
//! (p2 = 0, sigma2^2 = sigma1^2 + p tau1^2).

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::norm_cdf;
use crate::model::{log_marginal_density, sample_dataset, AltKind, ModelParams};

/// Monte Carlo estimates of the divergence moments.
#[derive(Debug, Clone, Copy)]
pub struct KlStats {
    /// Mean log ratio (nats).
    pub k12: f64,
    /// Second raw moment of the log ratio.
    pub v12: f64,
    pub n_mc: usize,
    pub se_k12: f64,
    pub se_v12: f64,
}

impl KlStats {
    /// Centered variance of the log ratio, `V12 - K12^2`.
    pub fn centered_var(&self) -> f64 {
        self.v12 - self.k12 * self.k12
    }

    /// Uncentered second moment scaled by m (the cruder variance proxy).
    pub fn uncentered_var_of_sum(&self, m: usize) -> f64 {
        m as f64 * self.v12
    }
}

/// Estimate `K12` and `V12` by sampling from model 1.
pub fn kl_mc<R: Rng>(
    params1: &ModelParams,
    params2: &ModelParams,
    n: usize,
    rng: &mut R,
) -> Result<KlStats> {
    if n < 1000 {
        return Err(Error::ParamDomain(format!("kl_mc needs n >= 1000, got {n}")));
    }
    params1.validate()?;
    params2.validate()?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_4 = 0.0;
    let chunk = 65_536usize;
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(chunk);
        let data = sample_dataset(params1, take, &AltKind::GaussianSignal, rng)?;
        for &x in &data.x {
            let lr = log_marginal_density(x, params1) - log_marginal_density(x, params2);
            sum += lr;
            let lr2 = lr * lr;
            sum_sq += lr2;
            sum_4 += lr2 * lr2;
        }
        remaining -= take;
    }
    let nf = n as f64;
    let k12 = sum / nf;
    let v12 = sum_sq / nf;
    let var_lr = (v12 - k12 * k12).max(0.0);
    let var_lr2 = (sum_4 / nf - v12 * v12).max(0.0);
    Ok(KlStats {
        k12,
        v12,
        n_mc: n,
        se_k12: (var_lr / nf).sqrt(),
        se_v12: (var_lr2 / nf).sqrt(),
    })
}

/// Normal approximation of `P(D12 < 0)` at m observations:
/// `Phi(-m K12 / sqrt(m (V12 - K12^2)))`.
pub fn wrong_model_prob(stats: &KlStats, m: usize) -> Result<f64> {
    let var = stats.centered_var();
    if !(var > 0.0) {
        return Err(Error::ParamDomain(format!(
            "centered variance {var} must be positive (V12 > K12^2)"
        )));
    }
    let mf = m as f64;
    Ok(norm_cdf(-mf * stats.k12 / (mf * var).sqrt()))
}

/// Direct Monte Carlo estimate of `P(D12 < 0)`: fraction of replicates in
/// which the summed log ratio of m draws from model 1 is negative.
pub fn wrong_model_prob_direct<R: Rng>(
    params1: &ModelParams,
    params2: &ModelParams,
    m: usize,
    reps: usize,
    rng: &mut R,
) -> Result<f64> {
    if reps < 1000 {
        return Err(Error::ParamDomain(format!("needs reps >= 1000, got {reps}")));
    }
    params1.validate()?;
    params2.validate()?;
    let mut negative = 0usize;
    for _ in 0..reps {
        let data = sample_dataset(params1, m, &AltKind::GaussianSignal, rng)?;
        let d: f64 = data
            .x
            .iter()
            .map(|&x| log_marginal_density(x, params1) - log_marginal_density(x, params2))
            .sum();
        if d < 0.0 {
            negative += 1;
        }
    }
    Ok(negative as f64 / reps as f64)
}

/// The variance-matched "everything is signal" confusion of `params1`:
/// p = 1 with `tau2' = p tau1^2` keeps the marginal variance equal.
pub fn variance_matched_full(params1: &ModelParams) -> Result<ModelParams> {
    ModelParams::new(1.0, params1.sigma2, (params1.p * params1.tau2).max(1e-12))
}

/// The variance-matched "everything is null" confusion of `params1`:
/// p = 0 with `sigma2' = sigma1^2 + p tau1^2`.
pub fn variance_matched_null(params1: &ModelParams) -> Result<ModelParams> {
    ModelParams::new(0.0, params1.sigma2 + params1.p * params1.tau2, params1.tau2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_stream;
    use approx::assert_abs_diff_eq;

    const TAU2: f64 = 10.596_634_733_096_073;

    #[test]
    fn identical_models_have_zero_divergence() {
        let p = ModelParams::new(0.1, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(71, 0, "kl-same");
        let stats = kl_mc(&p, &p, 10_000, &mut rng).unwrap();
        assert_eq!(stats.k12, 0.0);
        assert_eq!(stats.v12, 0.0);
    }

    #[test]
    fn variance_matching_constructions() {
        let p = ModelParams::new(0.01, 1.0, TAU2).unwrap();
        let full = variance_matched_full(&p).unwrap();
        assert_eq!(full.p, 1.0);
        assert_abs_diff_eq!(full.marginal_var(), p.marginal_var(), epsilon = 1e-12);

        let p = ModelParams::new(0.95, 1.0, TAU2).unwrap();
        let null = variance_matched_null(&p).unwrap();
        assert_eq!(null.p, 0.0);
        assert_abs_diff_eq!(null.marginal_var(), p.marginal_var(), epsilon = 1e-12);
    }

    // Quadrature-grade reference values for the two standard confusion
    // pairs at m = 200 (exact integrals: K12 = 0.0193962 / 0.0012595,
    // V12 = 0.3198340 / 0.0025497).
    #[test]
    fn divergence_matches_quadrature_reference() {
        let m1 = ModelParams::new(0.01, 1.0, TAU2).unwrap();
        let m2 = variance_matched_full(&m1).unwrap();
        let mut rng = derive_stream(72, 0, "kl-ref1");
        let stats = kl_mc(&m1, &m2, 2_000_000, &mut rng).unwrap();
        assert!((stats.k12 - 0.019_396_2).abs() < 4.0 * stats.se_k12, "k12 = {}", stats.k12);
        assert!((stats.v12 - 0.319_834_0).abs() < 4.0 * stats.se_v12, "v12 = {}", stats.v12);
        let p_approx = wrong_model_prob(&stats, 200).unwrap();
        assert_abs_diff_eq!(p_approx, 0.313_7, epsilon = 0.005);

        let m1 = ModelParams::new(0.95, 1.0, TAU2).unwrap();
        let m2 = variance_matched_null(&m1).unwrap();
        let stats = kl_mc(&m1, &m2, 2_000_000, &mut rng).unwrap();
        assert!((stats.k12 - 0.001_259_5).abs() < 4.0 * stats.se_k12, "k12 = {}", stats.k12);
        assert!((stats.v12 - 0.002_549_7).abs() < 4.0 * stats.se_v12, "v12 = {}", stats.v12);
        let p_approx = wrong_model_prob(&stats, 200).unwrap();
        assert_abs_diff_eq!(p_approx, 0.362_1, epsilon = 0.005);
    }

    #[test]
    fn kl_nonnegative_within_mc_error() {
        let mut rng = derive_stream(73, 0, "kl-nonneg");
        let pairs = [
            (ModelParams::new(0.05, 1.0, 4.0).unwrap(), ModelParams::new(0.3, 1.2, 2.0).unwrap()),
            (ModelParams::new(0.5, 2.0, 1.0).unwrap(), ModelParams::new(0.5, 1.0, 2.0).unwrap()),
            (ModelParams::new(0.9, 1.0, 8.0).unwrap(), ModelParams::new(0.2, 1.0, 8.0).unwrap()),
        ];
        for (a, b) in pairs {
            let stats = kl_mc(&a, &b, 200_000, &mut rng).unwrap();
            assert!(stats.k12 > -3.0 * stats.se_k12, "K12 = {} +- {}", stats.k12, stats.se_k12);
        }
    }

    #[test]
    fn wrong_model_prob_edge_cases() {
        let degenerate = KlStats { k12: 1.0, v12: 1.0, n_mc: 1000, se_k12: 0.0, se_v12: 0.0 };
        assert!(wrong_model_prob(&degenerate, 10).is_err());
        let strong = KlStats { k12: 50.0, v12: 2501.0, n_mc: 1000, se_k12: 0.0, se_v12: 0.0 };
        assert!(wrong_model_prob(&strong, 200).unwrap() < 1e-12);
        let symmetric = KlStats { k12: 0.0, v12: 0.5, n_mc: 1000, se_k12: 0.0, se_v12: 0.0 };
        assert_abs_diff_eq!(wrong_model_prob(&symmetric, 50).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn direct_simulation_agrees_with_symmetry() {
        let p = ModelParams::new(0.1, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(74, 0, "direct-sym");
        // identical models: D12 = 0 exactly, never negative
        let prob = wrong_model_prob_direct(&p, &p, 20, 1000, &mut rng).unwrap();
        assert_eq!(prob, 0.0);
        assert!(kl_mc(&p, &p, 10, &mut rng).is_err());
        assert!(wrong_model_prob_direct(&p, &p, 20, 10, &mut rng).is_err());
    }
}

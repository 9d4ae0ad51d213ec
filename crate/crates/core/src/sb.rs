//! Full-Bayes testing via a hierarchical spike-and-slab model.
//!
//! Priors: `p ~ Beta(1, beta)` (density `beta (1-p)^(beta-1)`),
//! `pi(sigma^2) = 1 / sigma^2` (when sigma is unknown) and
//! `pi(tau^2 | sigma^2) = sigma^2 / (sigma^2 + tau^2)^2`. The sampler is a
//! Gibbs sweep with
//!
//! * exact conjugate draws for the indicators
//!   (`gamma_i | rest ~ Bernoulli` with odds
//!   `p phi(x_i; 0, sigma^2 + tau^2) / [(1-p) phi(x_i; 0, sigma^2)]`)
//!   and for `p | gamma ~ Beta(1 + m1, beta + m - m1)`;
//! * random-walk Metropolis on the log variances, with the proposal scale
//!   tuned toward 0.35 acceptance during burn-in and frozen afterwards.
//!
//! `prob_null[i]` is the Rao-Blackwellized average of
//! `P(gamma_i = 0 | p, sigma^2, tau^2, x_i)` over kept sweeps; hypotheses
//! with `prob_null < 0.5` are rejected.
//!
//! The sweep visits observations in ascending order of value, so the chain
//! trajectory depends on the data only as a multiset: swapping two
//! observations exactly swaps their `prob_null` entries under the same
//! stream.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution};

use crate::error::{Error, Result};
use crate::frequentist::DecisionVector;
use crate::gauss::LN_SQRT_2PI;

/// Sampler configuration.
#[derive(Debug, Clone, Copy)]
pub struct SbConfig {
    /// Shape of the Beta(1, beta) prior on p.
    pub beta: f64,
    /// Total sweeps.
    pub n_iter: usize,
    /// Burn-in sweeps (tuning happens here).
    pub n_burn: usize,
    /// Known null variance, or None to sample sigma^2.
    pub sigma_known: Option<f64>,
    /// Initial random-walk scale on the log variances.
    pub proposal_sd: f64,
}

impl Default for SbConfig {
    fn default() -> Self {
        Self { beta: 22.76, n_iter: 5000, n_burn: 1000, sigma_known: Some(1.0), proposal_sd: 0.5 }
    }
}

impl SbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.n_burn {
            return Err(Error::ParamDomain(format!(
                "n_iter = {} must exceed n_burn = {}",
                self.n_iter, self.n_burn
            )));
        }
        if !(self.beta > 1.0) {
            return Err(Error::ParamDomain(format!("beta = {} must be > 1", self.beta)));
        }
        if let Some(s2) = self.sigma_known {
            if !(s2 > 0.0) {
                return Err(Error::ParamDomain(format!("sigma2 = {s2} must be > 0")));
            }
        }
        if !(self.proposal_sd > 0.0) {
            return Err(Error::ParamDomain("proposal_sd must be > 0".into()));
        }
        Ok(())
    }
}

/// Chain health indicators.
#[derive(Debug, Clone, Copy)]
pub struct ChainDiagnostics {
    /// Acceptance rate of the log-tau^2 moves over kept sweeps.
    pub accept_tau: f64,
    /// Acceptance rate of the log-sigma^2 moves, when sigma is sampled.
    pub accept_sigma: Option<f64>,
    /// Mean log posterior (up to a constant) over kept sweeps.
    pub mean_log_post: f64,
    /// Tuned proposal scales, frozen at the end of burn-in.
    pub proposal_sd_tau: f64,
    pub proposal_sd_sigma: Option<f64>,
}

/// Posterior output of SB or DPP.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// `P(H0i | data)` estimates, one per hypothesis.
    pub prob_null: Vec<f64>,
    /// Kept sweeps.
    pub draws_used: usize,
    pub diagnostics: ChainDiagnostics,
}

use crate::tuning::ProposalTuner;

/// Sufficient statistics of the current indicator split: the zero-mean
/// Gaussian likelihood depends on gamma only through these.
#[derive(Clone, Copy)]
struct SplitStats {
    m1: usize,
    sum_x2_signal: f64,
    sum_x2_total: f64,
    m: usize,
}

impl SplitStats {
    fn m0(&self) -> usize {
        self.m - self.m1
    }

    fn sum_x2_null(&self) -> f64 {
        self.sum_x2_total - self.sum_x2_signal
    }

    /// Log likelihood of the split under variances (sigma2, sigma2 + tau2).
    fn loglik(&self, sigma2: f64, alt_var: f64) -> f64 {
        let null = -0.5 * self.sum_x2_null() / sigma2
            - self.m0() as f64 * (0.5 * sigma2.ln() + LN_SQRT_2PI);
        let signal = -0.5 * self.sum_x2_signal / alt_var
            - self.m1 as f64 * (0.5 * alt_var.ln() + LN_SQRT_2PI);
        null + signal
    }
}

/// Log target for the log-tau^2 move (likelihood + priors + Jacobians),
/// dropping terms constant in tau^2.
fn log_target_tau(split: &SplitStats, sigma2: f64, log_tau2: f64) -> f64 {
    let tau2 = log_tau2.exp();
    split.loglik(sigma2, sigma2 + tau2) - 2.0 * (sigma2 + tau2).ln() + log_tau2
}

/// Log target for the log-sigma^2 move. The 1/sigma^2 prior cancels its own
/// Jacobian; the conditional tau^2 prior contributes -2 log(sigma^2 + tau^2)
/// once its sigma^2 factor is combined with the improper prior.
fn log_target_sigma(split: &SplitStats, log_sigma2: f64, tau2: f64) -> f64 {
    let sigma2 = log_sigma2.exp();
    split.loglik(sigma2, sigma2 + tau2) - 2.0 * (sigma2 + tau2).ln()
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Conjugate draw of p given `m1` signals among `m` under the Beta(1, beta)
/// prior: `p | gamma ~ Beta(1 + m1, beta + m - m1)`.
pub fn sample_p_given_counts<R: Rng>(m1: usize, m: usize, beta: f64, rng: &mut R) -> f64 {
    let dist = BetaDist::new(1.0 + m1 as f64, beta + (m - m1) as f64).expect("valid Beta parameters");
    dist.sample(rng).clamp(1e-12, 1.0 - 1e-12)
}

/// Run the sampler. Deterministic given the stream.
pub fn sb_run<R: Rng>(xs: &[f64], cfg: &SbConfig, rng: &mut R) -> Result<PosteriorSummary> {
    cfg.validate()?;
    let m = xs.len();
    if m == 0 {
        return Err(Error::ParamDomain("sb_run needs m >= 1".into()));
    }

    // visit order determined by the values alone
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let x2: Vec<f64> = xs.iter().map(|&x| x * x).collect();
    let sum_x2: f64 = x2.iter().sum();
    let m2 = sum_x2 / m as f64;

    let sigma_is_known = cfg.sigma_known.is_some();
    let mut sigma2 = match cfg.sigma_known {
        Some(s2) => s2,
        None => (median_of(x2.clone()) / 0.454_936_423_119_572_85).min(m2).max(1e-8),
    };
    let mut tau2 = (m2 - sigma2).max(0.5 * sigma2);
    let mut p = 1.0 / (1.0 + cfg.beta); // prior mean
    let mut gamma = vec![false; m];
    let mut split = SplitStats { m1: 0, sum_x2_signal: 0.0, sum_x2_total: sum_x2, m };

    let mut tuner_tau = ProposalTuner::new(cfg.proposal_sd);
    let mut tuner_sigma = ProposalTuner::new(cfg.proposal_sd);

    let kept = cfg.n_iter - cfg.n_burn;
    let mut prob_null_acc = vec![0.0f64; m];
    let mut log_post_acc = 0.0;

    for sweep in 0..cfg.n_iter {
        if sweep == cfg.n_burn {
            tuner_tau.freeze();
            tuner_sigma.freeze();
        }
        let keep = sweep >= cfg.n_burn;

        // (a) indicators, visiting observations in value order
        let alt_var = sigma2 + tau2;
        let lw0 = (1.0 - p).ln() - 0.5 * sigma2.ln();
        let lwa = p.ln() - 0.5 * alt_var.ln();
        let inv0 = 0.5 / sigma2;
        let inva = 0.5 / alt_var;
        let mut m1 = 0usize;
        let mut sum_x2_signal = 0.0;
        for &i in &order {
            let log_odds = (lwa - inva * x2[i]) - (lw0 - inv0 * x2[i]);
            let prob_signal = 1.0 / (1.0 + (-log_odds).exp());
            let is_signal = rng.random::<f64>() < prob_signal;
            gamma[i] = is_signal;
            if is_signal {
                m1 += 1;
                sum_x2_signal += x2[i];
            }
            if keep {
                prob_null_acc[i] += 1.0 - prob_signal;
            }
        }
        split.m1 = m1;
        split.sum_x2_signal = sum_x2_signal;

        // (b) p | gamma ~ Beta(1 + m1, beta + m0)
        p = sample_p_given_counts(m1, m, cfg.beta, rng);

        // (c) variances by random-walk Metropolis on the log scale
        let mut log_tau2 = tau2.ln();
        let current = log_target_tau(&split, sigma2, log_tau2);
        if !current.is_finite() {
            return Err(Error::DivergentChain(format!("non-finite log posterior at sweep {sweep}")));
        }
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let cand = log_tau2 + tuner_tau.sd() * z;
        let cand_target = log_target_tau(&split, sigma2, cand);
        let accept = cand_target - current > rng.random::<f64>().ln();
        if accept {
            log_tau2 = cand;
            tau2 = cand.exp();
        }
        tuner_tau.record(accept);

        if !sigma_is_known {
            let log_sigma2 = sigma2.ln();
            let current = log_target_sigma(&split, log_sigma2, tau2);
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let cand = log_sigma2 + tuner_sigma.sd() * z;
            let cand_target = log_target_sigma(&split, cand, tau2);
            let accept = cand_target - current > rng.random::<f64>().ln();
            if accept {
                sigma2 = cand.exp();
            }
            tuner_sigma.record(accept);
        }

        if keep {
            let lp = split.loglik(sigma2, sigma2 + tau2)
                + (cfg.beta - 1.0) * (1.0 - p).ln()
                + (m1 as f64) * p.ln()
                + ((m - m1) as f64) * (1.0 - p).ln()
                - 2.0 * (sigma2 + tau2).ln();
            if !lp.is_finite() {
                return Err(Error::DivergentChain(format!("non-finite log posterior at sweep {sweep}")));
            }
            log_post_acc += lp;
        }
    }

    let prob_null: Vec<f64> = prob_null_acc.iter().map(|&a| a / kept as f64).collect();
    Ok(PosteriorSummary {
        prob_null,
        draws_used: kept,
        diagnostics: ChainDiagnostics {
            accept_tau: tuner_tau.rate(),
            accept_sigma: if sigma_is_known { None } else { Some(tuner_sigma.rate()) },
            mean_log_post: log_post_acc / kept as f64,
            proposal_sd_tau: tuner_tau.sd(),
            proposal_sd_sigma: if sigma_is_known { None } else { Some(tuner_sigma.sd()) },
        },
    })
}

/// Reject every hypothesis with posterior null probability below one half.
pub fn sb_decide(summary: &PosteriorSummary) -> DecisionVector {
    DecisionVector { reject: summary.prob_null.iter().map(|&q| q < 0.5).collect() }
}

/// Brute-force posterior null probabilities for known sigma by direct
/// two-dimensional quadrature over (p, tau^2), marginalizing the indicators
/// analytically. Cost grows as `n_quad^2 * m`; intended as an exact
/// reference for tiny datasets.
///
/// The tau^2 integral is mapped to (0,1) by `t = tau^2 / (sigma^2 + tau^2)`,
/// under which the prior `sigma^2 / (sigma^2 + tau^2)^2 dtau^2` becomes
/// exactly `dt`; the midpoint rule is applied on both axes.
pub fn prob_null_by_quadrature(xs: &[f64], beta: f64, sigma2: f64, n_quad: usize) -> Vec<f64> {
    let m = xs.len();
    let mut numer = vec![0.0f64; m];
    let mut denom = 0.0f64;
    let l0: Vec<f64> = xs.iter().map(|&x| -0.5 * x * x / sigma2 - 0.5 * sigma2.ln() - LN_SQRT_2PI).collect();
    for ip in 0..n_quad {
        let p = (ip as f64 + 0.5) / n_quad as f64;
        let prior_p = beta * (1.0 - p).powf(beta - 1.0);
        for it in 0..n_quad {
            let t = (it as f64 + 0.5) / n_quad as f64;
            let tau2 = sigma2 * t / (1.0 - t);
            let alt_var = sigma2 + tau2;
            let mut loglik = 0.0;
            let mut null_probs = Vec::with_capacity(m);
            for (i, &x) in xs.iter().enumerate() {
                let la = -0.5 * x * x / alt_var - 0.5 * alt_var.ln() - LN_SQRT_2PI;
                let a = (1.0 - p).ln() + l0[i];
                let b = p.ln() + la;
                let (li, pn) = if a >= b {
                    let e = (b - a).exp();
                    (a + e.ln_1p(), 1.0 / (1.0 + e))
                } else {
                    let e = (a - b).exp();
                    (b + e.ln_1p(), e / (1.0 + e))
                };
                loglik += li;
                null_probs.push(pn);
            }
            let weight = prior_p * loglik.exp();
            denom += weight;
            for i in 0..m {
                numer[i] += weight * null_probs[i];
            }
        }
    }
    numer.iter().map(|&n| n / denom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_dataset, AltKind, ModelParams};
    use crate::stream::derive_stream;

    const TAU2: f64 = 10.596_634_733_096_073;

    fn small_cfg() -> SbConfig {
        SbConfig { n_iter: 6000, n_burn: 1500, ..SbConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SbConfig { n_iter: 10, n_burn: 10, ..SbConfig::default() }.validate().is_err());
        assert!(SbConfig { beta: 0.5, ..SbConfig::default() }.validate().is_err());
        assert!(SbConfig::default().validate().is_ok());
    }

    #[test]
    fn decide_thresholds_at_half() {
        let summary = PosteriorSummary {
            prob_null: vec![0.49, 0.51, 0.5],
            draws_used: 1,
            diagnostics: ChainDiagnostics {
                accept_tau: 0.3,
                accept_sigma: None,
                mean_log_post: 0.0,
                proposal_sd_tau: 0.5,
                proposal_sd_sigma: None,
            },
        };
        // strict inequality: an exact 0.5 is not rejected
        assert_eq!(sb_decide(&summary).reject, vec![true, false, false]);
    }

    #[test]
    fn single_null_observation_keeps_high_prob_null() {
        let mut rng = derive_stream(41, 0, "sb-single");
        let summary = sb_run(&[0.0], &small_cfg(), &mut rng).unwrap();
        assert!(summary.prob_null[0] > 0.5, "prob_null = {}", summary.prob_null[0]);
        let quad = prob_null_by_quadrature(&[0.0], 22.76, 1.0, 600);
        assert!(quad[0] > 0.5);
        assert!((summary.prob_null[0] - quad[0]).abs() < 0.01,
            "gibbs {} vs quadrature {}", summary.prob_null[0], quad[0]);
    }

    #[test]
    fn matches_quadrature_on_three_points() {
        let xs = [0.3, -2.2, 5.1];
        let quad = prob_null_by_quadrature(&xs, 22.76, 1.0, 600);
        let mut rng = derive_stream(42, 0, "sb-quad");
        let cfg = SbConfig { n_iter: 40_000, n_burn: 4000, ..SbConfig::default() };
        let summary = sb_run(&xs, &cfg, &mut rng).unwrap();
        for i in 0..3 {
            assert!(
                (summary.prob_null[i] - quad[i]).abs() < 0.01,
                "i = {i}: gibbs {} vs quadrature {}",
                summary.prob_null[i],
                quad[i]
            );
        }
    }

    #[test]
    fn prob_null_is_antitone_in_abs_x() {
        let xs = [0.1, -0.9, 1.7, -2.6, 3.4, -4.9];
        let mut rng = derive_stream(43, 0, "sb-antitone");
        let cfg = SbConfig { n_iter: 20_000, n_burn: 2000, ..SbConfig::default() };
        let summary = sb_run(&xs, &cfg, &mut rng).unwrap();
        for w in summary.prob_null.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "prob_null not antitone: {:?}", summary.prob_null);
        }
    }

    #[test]
    fn swapping_observations_swaps_prob_null_exactly() {
        let params = ModelParams::new(0.2, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(44, 0, "sb-swap-data");
        let data = sample_dataset(&params, 40, &AltKind::GaussianSignal, &mut rng).unwrap();
        let mut swapped = data.x.clone();
        swapped.swap(3, 17);

        let cfg = small_cfg();
        let mut r1 = derive_stream(44, 1, "sb-swap-run");
        let a = sb_run(&data.x, &cfg, &mut r1).unwrap();
        let mut r2 = derive_stream(44, 1, "sb-swap-run");
        let b = sb_run(&swapped, &cfg, &mut r2).unwrap();

        assert_eq!(a.prob_null[3], b.prob_null[17]);
        assert_eq!(a.prob_null[17], b.prob_null[3]);
        for i in 0..40 {
            if i != 3 && i != 17 {
                assert_eq!(a.prob_null[i], b.prob_null[i]);
            }
        }
    }

    #[test]
    fn acceptance_rate_lands_in_band_after_tuning() {
        let params = ModelParams::new(0.1, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(45, 0, "sb-accept-data");
        let data = sample_dataset(&params, 200, &AltKind::GaussianSignal, &mut rng).unwrap();
        for sigma_known in [Some(1.0), None] {
            let cfg = SbConfig { sigma_known, ..small_cfg() };
            let mut r = derive_stream(45, 1, "sb-accept-run");
            let s = sb_run(&data.x, &cfg, &mut r).unwrap();
            assert!(
                (0.1..=0.7).contains(&s.diagnostics.accept_tau),
                "tau acceptance {} outside band",
                s.diagnostics.accept_tau
            );
            if let Some(acc) = s.diagnostics.accept_sigma {
                assert!((0.1..=0.7).contains(&acc), "sigma acceptance {acc} outside band");
            }
            assert!(s.diagnostics.mean_log_post.is_finite());
        }
    }

    // Conditional p-draws given a frozen split follow Beta(1 + m1, beta + m0).
    #[test]
    fn beta_conjugacy_distribution() {
        use statrs::distribution::{Beta, ContinuousCDF};
        let beta_shape = 22.76;
        let (m, m1) = (200usize, 14usize);
        let mut rng = derive_stream(46, 0, "sb-conjugacy");
        let draws: Vec<f64> =
            (0..10_000).map(|_| sample_p_given_counts(m1, m, beta_shape, &mut rng)).collect();
        let reference = Beta::new(1.0 + m1 as f64, beta_shape + (m - m1) as f64).unwrap();
        let p = crate::gof::ks_one_sample(&draws, |x| reference.cdf(x));
        assert!(p > 0.01, "KS p = {p}");
    }
}

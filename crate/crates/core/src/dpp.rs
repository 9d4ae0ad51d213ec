//! Dirichlet-process mixture testing with a spike-and-slab base measure.
//!
//! The effects follow `mu_i | P ~ P` with
//! `P ~ Dir(c, (1 - p0) delta_0 + p0 N(0, tau^2))`, so a draw of P puts
//! positive mass on exactly zero and the signal indicator is
//! `gamma_i = I(mu_i != 0)`. Integrating P out yields a Polya-urn scheme
//! whose full conditional for `mu_i` mixes
//!
//! * the zero atom, with weight `(c (1 - p0) + n0) phi(x_i; 0, sigma^2)`
//!   (existing zero-valued assignments merge with the base term),
//! * a fresh signal atom, with weight `c p0 phi(x_i; 0, sigma^2 + tau^2)`,
//!   drawn from `N(x_i tau^2 / (sigma^2 + tau^2), sigma^2 tau^2 / (sigma^2 + tau^2))`,
//! * each occupied nonzero atom `mu_j`, with weight `n_j phi(x_i; mu_j, sigma^2)`.
//!
//! Hyperparameters: `p0 | partition ~ Beta(1 + k+, beta + z)` where `k+`
//! counts distinct nonzero clusters and `z` flags the zero cluster; the
//! precision `c` uses the auxiliary-beta augmentation against its
//! `Gamma(1, 1)` prior; the variances move by random-walk Metropolis on the
//! log scale against the atom values (for `tau^2`) and the residuals (for
//! `sigma^2`) under the joint prior `(sigma^2 + tau^2)^(-2)`.
//!
//! `prob_null[i]` is the fraction of kept sweeps with `mu_i = 0`.

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::frequentist::DecisionVector;
use crate::gauss::LN_SQRT_2PI;
use crate::sb::{sample_p_given_counts, ChainDiagnostics, PosteriorSummary};

#[derive(Debug, Clone, Copy)]
pub struct DppConfig {
    /// Shape of the Beta(1, beta) prior on p0.
    pub beta: f64,
    /// Gamma prior on the precision c (shape, rate); defaults to (1, 1).
    pub c_shape: f64,
    pub c_rate: f64,
    pub n_iter: usize,
    pub n_burn: usize,
    pub sigma_known: Option<f64>,
    pub proposal_sd: f64,
    /// Diagnostic controls: freeze a hyperparameter instead of sampling it.
    pub fixed_p0: Option<f64>,
    pub fixed_c: Option<f64>,
}

impl Default for DppConfig {
    fn default() -> Self {
        Self {
            beta: 22.76,
            c_shape: 1.0,
            c_rate: 1.0,
            n_iter: 4000,
            n_burn: 1000,
            sigma_known: Some(1.0),
            proposal_sd: 0.5,
            fixed_p0: None,
            fixed_c: None,
        }
    }
}

impl DppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.n_burn {
            return Err(Error::ParamDomain(format!(
                "n_iter = {} must exceed n_burn = {}",
                self.n_iter, self.n_burn
            )));
        }
        if !(self.beta > 1.0 && self.c_shape > 0.0 && self.c_rate > 0.0 && self.proposal_sd > 0.0) {
            return Err(Error::ParamDomain("invalid DPP prior/proposal settings".into()));
        }
        if let Some(p0) = self.fixed_p0 {
            if !(0.0..=1.0).contains(&p0) {
                return Err(Error::ParamDomain(format!("fixed p0 = {p0} not in [0, 1]")));
            }
        }
        if let Some(c) = self.fixed_c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::ParamDomain(format!("fixed c = {c} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// A nonzero cluster: shared atom value and its member count.
#[derive(Debug, Clone, Copy)]
pub struct Atom {
    pub value: f64,
    pub count: usize,
}

/// Current partition and hyperparameters of the chain.
#[derive(Debug, Clone)]
pub struct DppState {
    /// 0 marks the zero cluster; j >= 1 points at `atoms[j - 1]`.
    pub assignment: Vec<usize>,
    pub atoms: Vec<Atom>,
    pub n_zero: usize,
    pub p0: f64,
    pub c: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

impl DppState {
    /// Number of distinct occupied nonzero clusters.
    pub fn k_plus(&self) -> usize {
        self.atoms.iter().filter(|a| a.count > 0).count()
    }

    pub fn zero_occupied(&self) -> bool {
        self.n_zero > 0
    }

    /// Effect value for observation i (0 for the zero cluster).
    pub fn mu(&self, i: usize) -> f64 {
        match self.assignment[i] {
            0 => 0.0,
            j => self.atoms[j - 1].value,
        }
    }

    /// Verify the cluster map against the assignments.
    pub fn check_partition(&self) -> Result<()> {
        let m = self.assignment.len();
        let mut zero = 0usize;
        let mut counts = vec![0usize; self.atoms.len()];
        for &a in &self.assignment {
            if a == 0 {
                zero += 1;
            } else if a - 1 < counts.len() {
                counts[a - 1] += 1;
            } else {
                return Err(Error::ParamDomain(format!("assignment {a} out of range")));
            }
        }
        if zero != self.n_zero {
            return Err(Error::ParamDomain(format!(
                "zero-cluster count {zero} != recorded {}",
                self.n_zero
            )));
        }
        for (j, atom) in self.atoms.iter().enumerate() {
            if counts[j] != atom.count {
                return Err(Error::ParamDomain(format!(
                    "cluster {j} count {} != recorded {}",
                    counts[j], atom.count
                )));
            }
            if atom.count > 0 && atom.value == 0.0 {
                return Err(Error::ParamDomain("nonzero cluster holds a zero atom".into()));
            }
        }
        let total = zero + counts.iter().sum::<usize>();
        if total != m {
            return Err(Error::ParamDomain(format!("partition covers {total} of {m}")));
        }
        Ok(())
    }
}

/// Conditional weights for reassigning observation i (with i removed):
/// `(zero, fresh, per-atom)`.
pub fn conditional_weights(state: &DppState, x_i: f64, n_zero_minus: usize) -> (f64, f64, Vec<f64>) {
    let sigma2 = state.sigma2;
    let alt_var = state.sigma2 + state.tau2;
    let norm0 = 1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let w_zero = (state.c * (1.0 - state.p0) + n_zero_minus as f64)
        * norm0
        * (-0.5 * x_i * x_i / sigma2).exp();
    let w_fresh = state.c
        * state.p0
        * (-0.5 * x_i * x_i / alt_var).exp()
        / (2.0 * std::f64::consts::PI * alt_var).sqrt();
    let w_atoms: Vec<f64> = state
        .atoms
        .iter()
        .map(|a| {
            if a.count == 0 {
                0.0
            } else {
                let d = x_i - a.value;
                a.count as f64 * norm0 * (-0.5 * d * d / sigma2).exp()
            }
        })
        .collect();
    (w_zero, w_fresh, w_atoms)
}

/// Escobar-West auxiliary update of the precision under Gamma(shape, rate).
pub fn sample_precision<R: Rng>(
    c: f64,
    k_distinct: usize,
    m: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let eta: f64 = BetaDist::new(c + 1.0, m as f64).expect("valid Beta").sample(rng);
    let k = k_distinct as f64;
    let rate_post = rate - eta.ln();
    let odds = (shape + k - 1.0) / (m as f64 * rate_post);
    let shape_post = if rng.random::<f64>() < odds / (1.0 + odds) {
        shape + k
    } else {
        shape + k - 1.0
    };
    let shape_post = shape_post.max(1e-3);
    Gamma::new(shape_post, 1.0 / rate_post).expect("valid Gamma").sample(rng).max(1e-12)
}

fn log_target_tau(state: &DppState, log_tau2: f64) -> f64 {
    let tau2 = log_tau2.exp();
    let mut ll = 0.0;
    let mut k = 0usize;
    for a in &state.atoms {
        if a.count > 0 {
            ll += -0.5 * a.value * a.value / tau2;
            k += 1;
        }
    }
    ll - k as f64 * (0.5 * log_tau2 + LN_SQRT_2PI) - 2.0 * (state.sigma2 + tau2).ln() + log_tau2
}

fn log_target_sigma(state: &DppState, xs: &[f64], log_sigma2: f64) -> f64 {
    let sigma2 = log_sigma2.exp();
    let mut ssr = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let r = x - state.mu(i);
        ssr += r * r;
    }
    -0.5 * ssr / sigma2 - xs.len() as f64 * (0.5 * log_sigma2 + LN_SQRT_2PI)
        - 2.0 * (sigma2 + state.tau2).ln()
        + log_sigma2
}

/// One full Gibbs sweep; exposed so diagnostics can drive the chain by hand.
pub struct DppChain<'a> {
    pub state: DppState,
    cfg: DppConfig,
    xs: &'a [f64],
    order: Vec<usize>,
    tuner_tau: crate::tuning::ProposalTuner,
    tuner_sigma: crate::tuning::ProposalTuner,
}

impl<'a> DppChain<'a> {
    pub fn new(xs: &'a [f64], cfg: &DppConfig) -> Result<Self> {
        cfg.validate()?;
        let m = xs.len();
        if m == 0 {
            return Err(Error::ParamDomain("dpp needs m >= 1".into()));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
        let m2 = xs.iter().map(|&x| x * x).sum::<f64>() / m as f64;
        let sigma2 = cfg.sigma_known.unwrap_or_else(|| m2.max(1e-8).min(1.0f64.max(m2 / 2.0)));
        let state = DppState {
            assignment: vec![0; m],
            atoms: Vec::new(),
            n_zero: m,
            p0: cfg.fixed_p0.unwrap_or(1.0 / (1.0 + cfg.beta)),
            c: cfg.fixed_c.unwrap_or(cfg.c_shape / cfg.c_rate),
            tau2: (m2 - sigma2).max(0.5 * sigma2),
            sigma2,
        };
        Ok(Self {
            state,
            cfg: *cfg,
            xs,
            order,
            tuner_tau: crate::tuning::ProposalTuner::new(cfg.proposal_sd),
            tuner_sigma: crate::tuning::ProposalTuner::new(cfg.proposal_sd),
        })
    }

    pub fn freeze_tuning(&mut self) {
        self.tuner_tau.freeze();
        self.tuner_sigma.freeze();
    }

    /// Resample every mu_i from its Polya-urn full conditional.
    pub fn sweep_assignments<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let state = &mut self.state;
        for &i in &self.order {
            // detach i
            match state.assignment[i] {
                0 => state.n_zero -= 1,
                j => state.atoms[j - 1].count -= 1,
            }
            let (w_zero, w_fresh, w_atoms) = conditional_weights(state, self.xs[i], state.n_zero);
            let total = w_zero + w_fresh + w_atoms.iter().sum::<f64>();
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::DivergentChain(format!(
                    "conditional weights for observation {i} sum to {total}"
                )));
            }
            let mut u = rng.random::<f64>() * total;
            if u < w_zero {
                state.assignment[i] = 0;
                state.n_zero += 1;
                continue;
            }
            u -= w_zero;
            if u < w_fresh {
                let alt_var = state.sigma2 + state.tau2;
                let post_mean = self.xs[i] * state.tau2 / alt_var;
                let post_sd = (state.sigma2 * state.tau2 / alt_var).sqrt();
                let z: f64 = rng.sample(StandardNormal);
                let value = post_mean + post_sd * z;
                // reuse an emptied slot if one exists
                if let Some(slot) = state.atoms.iter().position(|a| a.count == 0) {
                    state.atoms[slot] = Atom { value, count: 1 };
                    state.assignment[i] = slot + 1;
                } else {
                    state.atoms.push(Atom { value, count: 1 });
                    state.assignment[i] = state.atoms.len();
                }
                continue;
            }
            u -= w_fresh;
            let mut assigned = false;
            for (j, &w) in w_atoms.iter().enumerate() {
                if u < w {
                    state.atoms[j].count += 1;
                    state.assignment[i] = j + 1;
                    assigned = true;
                    break;
                }
                u -= w;
            }
            if !assigned {
                // numerical edge of the roulette pass: take the last
                // occupied atom
                let j = state
                    .atoms
                    .iter()
                    .rposition(|a| a.count > 0)
                    .unwrap_or_else(|| {
                        state.atoms.push(Atom { value: self.xs[i], count: 0 });
                        state.atoms.len() - 1
                    });
                state.atoms[j].count += 1;
                state.assignment[i] = j + 1;
            }
        }
        Ok(())
    }

    /// Hyperparameter block: p0, c, then the variances.
    pub fn sweep_hyper<R: Rng>(&mut self, rng: &mut R) {
        let k_plus = self.state.k_plus();
        let z = usize::from(self.state.zero_occupied());
        if self.cfg.fixed_p0.is_none() {
            // base-measure draws: k+ signal tables and z zero tables
            self.state.p0 = sample_p_given_counts(k_plus, k_plus + z, self.cfg.beta, rng);
        }
        if self.cfg.fixed_c.is_none() {
            self.state.c = sample_precision(
                self.state.c,
                k_plus + z,
                self.xs.len(),
                self.cfg.c_shape,
                self.cfg.c_rate,
                rng,
            );
        }

        let log_tau2 = self.state.tau2.ln();
        let current = log_target_tau(&self.state, log_tau2);
        let z_step: f64 = rng.sample(StandardNormal);
        let cand = log_tau2 + self.tuner_tau.sd() * z_step;
        let accept = log_target_tau(&self.state, cand) - current > rng.random::<f64>().ln();
        if accept {
            self.state.tau2 = cand.exp();
        }
        self.tuner_tau.record(accept);

        if self.cfg.sigma_known.is_none() {
            let log_sigma2 = self.state.sigma2.ln();
            let current = log_target_sigma(&self.state, self.xs, log_sigma2);
            let z_step: f64 = rng.sample(StandardNormal);
            let cand = log_sigma2 + self.tuner_sigma.sd() * z_step;
            let accept = log_target_sigma(&self.state, self.xs, cand) - current > rng.random::<f64>().ln();
            if accept {
                self.state.sigma2 = cand.exp();
            }
            self.tuner_sigma.record(accept);
        }
    }

    /// Data log likelihood at the current state, for chain-health traces.
    pub fn log_likelihood(&self) -> f64 {
        let mut ll = 0.0;
        for (i, &x) in self.xs.iter().enumerate() {
            let r = x - self.state.mu(i);
            ll += -0.5 * r * r / self.state.sigma2;
        }
        ll - self.xs.len() as f64 * (0.5 * self.state.sigma2.ln() + LN_SQRT_2PI)
    }
}

/// Run the sampler. Deterministic given the stream.
pub fn dpp_run<R: Rng>(xs: &[f64], cfg: &DppConfig, rng: &mut R) -> Result<PosteriorSummary> {
    let mut chain = DppChain::new(xs, cfg)?;
    let m = xs.len();
    let kept = cfg.n_iter - cfg.n_burn;
    let mut null_hits = vec![0usize; m];
    let mut log_post_acc = 0.0;

    for sweep in 0..cfg.n_iter {
        if sweep == cfg.n_burn {
            chain.freeze_tuning();
        }
        chain.sweep_assignments(rng)?;
        chain.sweep_hyper(rng);
        debug_assert!(chain.state.check_partition().is_ok());
        if sweep >= cfg.n_burn {
            for i in 0..m {
                if chain.state.assignment[i] == 0 {
                    null_hits[i] += 1;
                }
            }
            let lp = chain.log_likelihood();
            if !lp.is_finite() {
                return Err(Error::DivergentChain(format!("non-finite log likelihood at sweep {sweep}")));
            }
            log_post_acc += lp;
        }
    }
    chain.state.check_partition()?;

    Ok(PosteriorSummary {
        prob_null: null_hits.iter().map(|&h| h as f64 / kept as f64).collect(),
        draws_used: kept,
        diagnostics: ChainDiagnostics {
            accept_tau: chain.tuner_tau.rate(),
            accept_sigma: if cfg.sigma_known.is_some() { None } else { Some(chain.tuner_sigma.rate()) },
            mean_log_post: log_post_acc / kept as f64,
            proposal_sd_tau: chain.tuner_tau.sd(),
            proposal_sd_sigma: if cfg.sigma_known.is_some() { None } else { Some(chain.tuner_sigma.sd()) },
        },
    })
}

/// Reject every hypothesis whose estimated null probability is below 0.5.
pub fn dpp_decide(summary: &PosteriorSummary) -> DecisionVector {
    crate::sb::sb_decide(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_dataset, AltKind, ModelParams};
    use crate::sb::prob_null_by_quadrature;
    use crate::stream::derive_stream;

    const TAU2: f64 = 10.596_634_733_096_073;

    #[test]
    fn null_data_keeps_prob_null_high() {
        let params = ModelParams::new(0.0, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(51, 0, "dpp-null-data");
        let data = sample_dataset(&params, 60, &AltKind::GaussianSignal, &mut rng).unwrap();
        // shrink toward zero to make every x_i clearly null-like
        let xs: Vec<f64> = data.x.iter().map(|x| 0.2 * x).collect();
        let cfg = DppConfig { n_iter: 2000, n_burn: 500, ..DppConfig::default() };
        let mut r = derive_stream(51, 1, "dpp-null-run");
        let s = dpp_run(&xs, &cfg, &mut r).unwrap();
        for (i, &q) in s.prob_null.iter().enumerate() {
            assert!(q > 0.9, "prob_null[{i}] = {q}");
        }
    }

    #[test]
    fn forced_zero_p0_is_absorbing() {
        let mut rng = derive_stream(52, 0, "dpp-absorbing");
        let params = ModelParams::new(0.5, 1.0, TAU2).unwrap();
        let data = sample_dataset(&params, 50, &AltKind::GaussianSignal, &mut rng).unwrap();
        let cfg = DppConfig {
            n_iter: 300,
            n_burn: 100,
            fixed_p0: Some(0.0),
            ..DppConfig::default()
        };
        let mut r = derive_stream(52, 1, "dpp-absorbing-run");
        let s = dpp_run(&data.x, &cfg, &mut r).unwrap();
        assert!(s.prob_null.iter().all(|&q| q == 1.0));
    }

    #[test]
    fn weights_are_finite_and_positive_across_sweeps() {
        let params = ModelParams::new(0.3, 1.0, TAU2).unwrap();
        let mut rng = derive_stream(53, 0, "dpp-weights-data");
        let data = sample_dataset(&params, 80, &AltKind::GaussianSignal, &mut rng).unwrap();
        let cfg = DppConfig::default();
        let mut chain = DppChain::new(&data.x, &cfg).unwrap();
        let mut r = derive_stream(53, 1, "dpp-weights-run");
        for _ in 0..50 {
            chain.sweep_assignments(&mut r).unwrap();
            chain.sweep_hyper(&mut r);
            chain.state.check_partition().unwrap();
            for (i, &x) in data.x.iter().enumerate() {
                let n_zero_minus = chain.state.n_zero - usize::from(chain.state.assignment[i] == 0);
                let (w0, wf, wa) = conditional_weights(&chain.state, x, n_zero_minus);
                let total = w0 + wf + wa.iter().sum::<f64>();
                assert!(total.is_finite() && total > 0.0, "i = {i}, total = {total}");
                assert!(w0.is_finite() && wf.is_finite());
                assert!(wa.iter().all(|w| w.is_finite() && *w >= 0.0));
            }
        }
    }

    // p0 | partition ~ Beta(1 + k+, beta + z)
    #[test]
    fn p0_conjugate_update_distribution() {
        use statrs::distribution::{Beta, ContinuousCDF};
        let (k_plus, z, beta_shape) = (6usize, 1usize, 22.76);
        let mut rng = derive_stream(54, 0, "dpp-p0");
        let draws: Vec<f64> = (0..10_000)
            .map(|_| sample_p_given_counts(k_plus, k_plus + z, beta_shape, &mut rng))
            .collect();
        let reference = Beta::new(1.0 + k_plus as f64, beta_shape + z as f64).unwrap();
        let p = crate::gof::ks_one_sample(&draws, |x| reference.cdf(x));
        assert!(p > 0.01, "KS p = {p}");
    }

    // In the c -> 0 limit with a single observation the urn reduces to the
    // two-point spike-and-slab posterior, which the quadrature reference
    // computes exactly.
    #[test]
    fn small_c_single_observation_matches_quadrature() {
        let xs = [2.4];
        let cfg = DppConfig {
            n_iter: 60_000,
            n_burn: 5000,
            fixed_c: Some(1e-8),
            ..DppConfig::default()
        };
        let mut rng = derive_stream(55, 0, "dpp-small-c");
        let s = dpp_run(&xs, &cfg, &mut rng).unwrap();
        let quad = prob_null_by_quadrature(&xs, 22.76, 1.0, 600);
        assert!(
            (s.prob_null[0] - quad[0]).abs() < 0.02,
            "dpp {} vs quadrature {}",
            s.prob_null[0],
            quad[0]
        );
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = DppConfig { n_iter: 5, n_burn: 5, ..DppConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = DppConfig { fixed_p0: Some(1.5), ..DppConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(DppChain::new(&[], &DppConfig::default()).is_err());
    }
}

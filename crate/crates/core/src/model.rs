//! The two-groups mixture model: data generation, densities, likelihood and
//! p-values.
//!
//! Test statistic i is `x_i = gamma_i * mu_i + e_i` with `e_i ~ N(0, sigma^2)`,
//! `gamma_i ~ Bernoulli(p)` and, under the alternative, `mu_i` drawn either
//! from `N(0, tau^2)` or from a symmetrized gamma distribution. Marginally
//! (Gaussian signals),
//!
//! ```text
//! X_i ~ (1 - p) N(0, sigma^2) + p N(0, sigma^2 + tau^2).
//! ```

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::gauss::{log_add_exp, log_norm_pdf, norm_sf};

/// Mixture parameter vector (p, sigma^2, tau^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Signal fraction, in [0, 1].
    pub p: f64,
    /// Null variance, > 0.
    pub sigma2: f64,
    /// Signal variance, > 0.
    pub tau2: f64,
}

impl ModelParams {
    pub fn new(p: f64, sigma2: f64, tau2: f64) -> Result<Self> {
        let params = Self { p, sigma2, tau2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !self.p.is_finite() {
            return Err(Error::ParamDomain(format!("p = {} not in [0, 1]", self.p)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::ParamDomain(format!("sigma2 = {} not > 0", self.sigma2)));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::ParamDomain(format!("tau2 = {} not > 0", self.tau2)));
        }
        Ok(())
    }

    /// Variance of the alternative component, sigma^2 + tau^2.
    #[inline]
    pub fn alt_var(&self) -> f64 {
        self.sigma2 + self.tau2
    }

    /// Marginal variance sigma^2 + p tau^2.
    #[inline]
    pub fn marginal_var(&self) -> f64 {
        self.sigma2 + self.p * self.tau2
    }
}

/// Distribution of the signal effect `mu_i` under the alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AltKind {
    /// `mu_i ~ N(0, tau^2)`; the model the parametric rules assume.
    GaussianSignal,
    /// `|mu_i| ~ Gamma(shape, scale)` with a uniform random sign; density
    /// `0.5 g(|x|; shape, scale)`. Used to study prior misspecification.
    SymmetrizedGamma { shape: f64, scale: f64 },
}

impl AltKind {
    pub fn validate(&self) -> Result<()> {
        if let AltKind::SymmetrizedGamma { shape, scale } = self {
            if !(*shape > 0.0 && shape.is_finite()) {
                return Err(Error::ParamDomain(format!("gamma shape = {shape} not > 0")));
            }
            if !(*scale > 0.0 && scale.is_finite()) {
                return Err(Error::ParamDomain(format!("gamma scale = {scale} not > 0")));
            }
        }
        Ok(())
    }

    /// Signal density at `mu`; `tau2` is used only by the Gaussian kind.
    pub fn signal_density(&self, mu: f64, tau2: f64) -> f64 {
        match self {
            AltKind::GaussianSignal => log_norm_pdf(mu, tau2).exp(),
            AltKind::SymmetrizedGamma { shape, scale } => {
                let y = mu.abs();
                if y == 0.0 {
                    return if *shape < 1.0 { f64::INFINITY } else { 0.0 };
                }
                let log_g = (shape - 1.0) * y.ln()
                    - y / scale
                    - statrs::function::gamma::ln_gamma(*shape)
                    - shape * scale.ln();
                0.5 * log_g.exp()
            }
        }
    }

    /// Short tag used in stream derivation and result rows.
    pub fn tag(&self) -> String {
        match self {
            AltKind::GaussianSignal => "gaussian".to_string(),
            AltKind::SymmetrizedGamma { shape, scale } => {
                format!("symgamma(r={shape},u={scale})")
            }
        }
    }
}

/// A simulated set of m test statistics with their latent truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Observed statistics.
    pub x: Vec<f64>,
    /// Latent signal indicators.
    pub gamma: Vec<bool>,
    /// Latent effects; exactly 0 wherever `gamma` is false.
    pub mu: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, gamma: Vec<bool>, mu: Vec<f64>) -> Result<Self> {
        if x.len() != gamma.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: gamma.len() });
        }
        if x.len() != mu.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: mu.len() });
        }
        Ok(Self { x, gamma, mu })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n_signals(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }
}

/// Draw a dataset of m statistics. Deterministic given the stream state.
pub fn sample_dataset<R: Rng>(
    params: &ModelParams,
    m: usize,
    alt: &AltKind,
    rng: &mut R,
) -> Result<Dataset> {
    params.validate()?;
    alt.validate()?;
    if m == 0 {
        return Err(Error::ParamDomain("m must be >= 1".into()));
    }
    let sigma = params.sigma2.sqrt();
    let tau = params.tau2.sqrt();
    let gamma_dist = match alt {
        AltKind::SymmetrizedGamma { shape, scale } => Some(
            Gamma::new(*shape, *scale)
                .map_err(|e| Error::ParamDomain(format!("gamma alt: {e}")))?,
        ),
        AltKind::GaussianSignal => None,
    };
    let mut x = Vec::with_capacity(m);
    let mut gamma = Vec::with_capacity(m);
    let mut mu = Vec::with_capacity(m);
    for _ in 0..m {
        let is_signal = rng.random::<f64>() < params.p;
        let mu_i = if is_signal {
            match &gamma_dist {
                None => tau * rng.sample::<f64, _>(StandardNormal),
                Some(g) => {
                    let magnitude = g.sample(rng);
                    if rng.random::<bool>() {
                        magnitude
                    } else {
                        -magnitude
                    }
                }
            }
        } else {
            0.0
        };
        let noise: f64 = rng.sample(StandardNormal);
        x.push(mu_i + sigma * noise);
        gamma.push(is_signal);
        mu.push(mu_i);
    }
    Ok(Dataset { x, gamma, mu })
}

/// Marginal mixture density (Gaussian signals).
#[inline]
pub fn marginal_density(x: f64, params: &ModelParams) -> f64 {
    log_marginal_density(x, params).exp()
}

/// Log marginal density, evaluated in log space so that statistics out to
/// many null standard deviations keep full relative accuracy.
#[inline]
pub fn log_marginal_density(x: f64, params: &ModelParams) -> f64 {
    let l0 = log_norm_pdf(x, params.sigma2);
    if params.p <= 0.0 {
        return l0;
    }
    let la = log_norm_pdf(x, params.alt_var());
    if params.p >= 1.0 {
        return la;
    }
    log_add_exp((1.0 - params.p).ln() + l0, params.p.ln() + la)
}

/// Log likelihood of the statistics under the mixture.
pub fn log_likelihood(xs: &[f64], params: &ModelParams) -> f64 {
    xs.iter().map(|&x| log_marginal_density(x, params)).sum()
}

/// Two-sided p-value for the null N(0, sigma^2): `2 (1 - Phi(|x| / sigma))`.
#[inline]
pub fn two_sided_pvalue(x: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    2.0 * norm_sf(x.abs() / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gof;
    use crate::stream::derive_stream;
    use approx::assert_abs_diff_eq;

    const TAU2_M200: f64 = 10.596_634_733_096_073; // 2 ln 200

    #[test]
    fn marginal_density_values() {
        let null_only = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(marginal_density(0.0, &null_only), 0.398_942_280_401_432_7, epsilon = 1e-12);

        let half = ModelParams::new(0.5, 1.0, 3.0).unwrap();
        assert_abs_diff_eq!(marginal_density(0.0, &half), 0.299_206_710_301_074_54, epsilon = 1e-12);
    }

    #[test]
    fn tail_vanishes_and_likelihood_ratio_diverges() {
        let params = ModelParams::new(0.1, 1.0, TAU2_M200).unwrap();
        let mut last_ratio = 0.0;
        for &x in &[4.0, 8.0, 12.0, 16.0] {
            assert!(marginal_density(x, &params) < marginal_density(x - 2.0, &params));
            let ratio = log_norm_pdf(x, params.alt_var()) - log_norm_pdf(x, params.sigma2);
            assert!(ratio > last_ratio);
            last_ratio = ratio;
        }
        assert!(marginal_density(40.0, &params) < 1e-60);
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        let params = ModelParams::new(0.2, 1.3, TAU2_M200).unwrap();
        let half_width = 40.0 * params.alt_var().sqrt();
        let n = 200_001usize;
        let h = 2.0 * half_width / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            let x = -half_width + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            total += w * marginal_density(x, &params);
        }
        assert_abs_diff_eq!(total * h, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn log_likelihood_single_point_and_additivity() {
        let params = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(log_likelihood(&[0.0], &params), -0.918_938_533_204_672_7, epsilon = 1e-12);
        let xs = vec![1.3; 17];
        assert_abs_diff_eq!(
            log_likelihood(&xs, &params),
            17.0 * log_likelihood(&[1.3], &params),
            epsilon = 1e-10
        );
    }

    // Naive-evaluation oracle: direct two-term mixture without log-space tricks.
    #[test]
    fn log_likelihood_matches_naive_sum() {
        let params = ModelParams::new(0.17, 0.8, 5.0).unwrap();
        let mut rng = derive_stream(11, 0, "naive-oracle");
        let data = sample_dataset(&params, 500, &AltKind::GaussianSignal, &mut rng).unwrap();
        let naive: f64 = data
            .x
            .iter()
            .map(|&x| {
                let f0 = (-0.5 * x * x / params.sigma2).exp()
                    / (2.0 * std::f64::consts::PI * params.sigma2).sqrt();
                let fa = (-0.5 * x * x / params.alt_var()).exp()
                    / (2.0 * std::f64::consts::PI * params.alt_var()).sqrt();
                ((1.0 - params.p) * f0 + params.p * fa).ln()
            })
            .sum();
        assert_abs_diff_eq!(log_likelihood(&data.x, &params), naive, epsilon = 1e-10);
    }

    #[test]
    fn pvalue_reference_points() {
        assert_abs_diff_eq!(two_sided_pvalue(0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two_sided_pvalue(1.959964, 1.0), 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(two_sided_pvalue(-1.959964, 1.0), 0.05, epsilon = 1e-6);
        let mut last = 1.1;
        for i in 0..60 {
            let p = two_sided_pvalue(0.3 * i as f64, 1.0);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn degenerate_mixtures_sample_correctly() {
        let mut rng = derive_stream(1, 0, "degenerate");
        let null = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        let d = sample_dataset(&null, 200, &AltKind::GaussianSignal, &mut rng).unwrap();
        assert!(d.gamma.iter().all(|&g| !g));
        assert!(d.mu.iter().all(|&m| m == 0.0));

        let full = ModelParams::new(1.0, 1.0, TAU2_M200).unwrap();
        let d = sample_dataset(&full, 100_000, &AltKind::GaussianSignal, &mut rng).unwrap();
        assert!(d.gamma.iter().all(|&g| g));
        let var = d.x.iter().map(|x| x * x).sum::<f64>() / d.m() as f64;
        // marginal variance 1 + 2 ln 200 ~ 11.60; SE of the sample variance
        // of a normal is var * sqrt(2/m)
        let se = (1.0 + TAU2_M200) * (2.0 / d.m() as f64).sqrt();
        assert!((var - (1.0 + TAU2_M200)).abs() < 3.0 * se, "var = {var}");
    }

    #[test]
    fn mean_signal_count_matches_p() {
        let params = ModelParams::new(0.05, 1.0, TAU2_M200).unwrap();
        let reps = 2000;
        let mut total = 0usize;
        for r in 0..reps {
            let mut rng = derive_stream(5, r, "signal-count");
            let d = sample_dataset(&params, 200, &AltKind::GaussianSignal, &mut rng).unwrap();
            total += d.n_signals();
        }
        let mean = total as f64 / reps as f64;
        let se = (200.0 * 0.05 * 0.95 / reps as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn large_sample_moments() {
        let params = ModelParams::new(0.2, 1.0, TAU2_M200).unwrap();
        let m = 1_000_000usize;
        let mut rng = derive_stream(9, 0, "moments");
        let d = sample_dataset(&params, m, &AltKind::GaussianSignal, &mut rng).unwrap();
        let mf = m as f64;
        let (mut s2, mut s4, mut s8) = (0.0, 0.0, 0.0);
        for &x in &d.x {
            let x2 = x * x;
            s2 += x2;
            s4 += x2 * x2;
            s8 += x2 * x2 * x2 * x2;
        }
        let m2 = s2 / mf;
        let m4 = s4 / mf;
        let m8 = s8 / mf;
        let e2 = params.marginal_var();
        let e4 = 3.0 * ((1.0 - params.p) * params.sigma2.powi(2) + params.p * params.alt_var().powi(2));
        let se_m2 = ((m4 - m2 * m2) / mf).sqrt();
        let se_m4 = ((m8 - m4 * m4) / mf).sqrt();
        assert!((m2 - e2).abs() < 3.0 * se_m2, "m2 = {m2}, expected {e2}");
        assert!((m4 - e4).abs() < 3.0 * se_m4, "m4 = {m4}, expected {e4}");
    }

    #[test]
    fn sign_symmetry_of_the_model() {
        let params = ModelParams::new(0.15, 1.0, TAU2_M200).unwrap();
        let n = 200_000usize;
        let mut r1 = derive_stream(21, 0, "sym-a");
        let mut r2 = derive_stream(21, 0, "sym-b");
        let a = sample_dataset(&params, n, &AltKind::GaussianSignal, &mut r1).unwrap();
        let mut b = sample_dataset(&params, n, &AltKind::GaussianSignal, &mut r2).unwrap();
        for x in &mut b.x {
            *x = -*x;
        }
        let p = gof::ks_two_sample(&a.x, &b.x);
        assert!(p > 0.01, "two-sample KS p = {p}");
    }

    #[test]
    fn null_pvalues_are_uniform() {
        let params = ModelParams::new(0.0, 2.0, 1.0).unwrap();
        let mut rng = derive_stream(3, 0, "uniform-pvals");
        let d = sample_dataset(&params, 100_000, &AltKind::GaussianSignal, &mut rng).unwrap();
        let pvals: Vec<f64> = d.x.iter().map(|&x| two_sided_pvalue(x, params.sigma2.sqrt())).collect();
        let p = gof::ks_one_sample(&pvals, |t| t.clamp(0.0, 1.0));
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn symmetrized_gamma_signals() {
        let alt = AltKind::SymmetrizedGamma { shape: 4.0, scale: 0.649_327_882_874_189_3 };
        let params = ModelParams::new(1.0, 1e-12, 1.0);
        assert!(params.is_err()); // sigma2 must stay positive

        let params = ModelParams::new(1.0, 0.01, 1.0).unwrap();
        let mut rng = derive_stream(4, 0, "symgamma");
        let d = sample_dataset(&params, 400_000, &AltKind::GaussianSignal, &mut rng).unwrap();
        drop(d);
        let d = sample_dataset(&params, 400_000, &alt, &mut rng).unwrap();
        // E|mu| = shape * scale, E mu = 0 by symmetry
        let mean_abs = d.mu.iter().map(|m| m.abs()).sum::<f64>() / d.m() as f64;
        let mean = d.mu.iter().sum::<f64>() / d.m() as f64;
        assert!((mean_abs - 4.0 * 0.649_327_882_874_189_3).abs() < 0.01, "mean_abs = {mean_abs}");
        assert!(mean.abs() < 0.01, "mean = {mean}");
        // density integrates to 1
        let (n, half) = (400_001, 30.0);
        let h = 2.0 * half / (n - 1) as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let x = -half + i as f64 * h;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * alt.signal_density(x, 1.0)
            })
            .sum::<f64>()
            * h;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ModelParams::new(-0.1, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.1, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 1.0, -1.0).is_err());
        let bad = ModelParams { p: 0.5, sigma2: -1.0, tau2: 1.0 };
        let mut rng = derive_stream(0, 0, "bad");
        assert!(sample_dataset(&bad, 10, &AltKind::GaussianSignal, &mut rng).is_err());
        assert!(sample_dataset(&ModelParams { p: 0.1, sigma2: 1.0, tau2: 1.0 }, 0, &AltKind::GaussianSignal, &mut rng).is_err());
    }
}

//! Parametric empirical Bayes estimation and the plug-in classifiers.
//!
//! Estimation is profiled over the signal fraction p: for each fixed p the
//! component variances are fit either by EM (two-component zero-mean
//! Gaussian scale mixture with fixed weights) or by matching the second and
//! fourth moments of the mixture, and p is then chosen by maximizing the
//! resulting profile log likelihood over a grid refined by golden-section
//! search.
//!
//! * `profile_mle` maximizes the bare profile likelihood (PEB1 / BH1);
//! * `penalized_mle` maximizes the posterior density of p under the prior
//!   `f(p) = beta (1 - p)^(beta - 1)`, i.e. adds `(beta - 1) log(1 - p)` to
//!   the profile log likelihood (PEB2 / BH2 with moment fits).
//!
//! The classifiers plug the estimates into the Bayes-oracle threshold
//! (`peb_decide`) or into the modified step-up rule with
//! `m_eff = m (1 - p_hat)` (`bh_plugin_decide`).

use crate::error::{Error, Result};
use crate::frequentist::{bh_step_up, clamp_phat_for_m_eff, DecisionVector, StepUpConfig};
use crate::gauss::LN_SQRT_2PI;
use crate::model::{two_sided_pvalue, ModelParams};
use crate::oracle::{oracle_decide, LossMatrix};

/// Sparsity-encouraging prior on p with density `beta (1 - p)^(beta - 1)`.
#[derive(Debug, Clone, Copy)]
pub struct PriorP {
    pub beta: f64,
}

impl PriorP {
    /// The shape used throughout the simulations; prior median ~ 0.03.
    pub const DEFAULT: PriorP = PriorP { beta: 22.76 };

    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Error::ParamDomain(format!("beta = {beta} must be > 1")));
        }
        Ok(Self { beta })
    }

    pub fn median(&self) -> f64 {
        1.0 - 0.5f64.powf(1.0 / self.beta)
    }
}

/// How the component variances are fit at each candidate p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceFit {
    Em,
    Moments,
}

/// Which estimator produced an [`EstimateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    ProfileMle,
    Penalized(VarianceFit),
}

/// Fitted mixture parameters ready for plug-in classification.
#[derive(Debug, Clone, Copy)]
pub struct EstimateSet {
    pub p_hat: f64,
    pub tau2_hat: f64,
    pub sigma2_hat: f64,
    pub sigma_known: bool,
    pub method: EstimatorMethod,
    /// False when some inner EM hit its iteration cap.
    pub converged: bool,
    /// True when the best grid point sat on the p-grid boundary.
    pub boundary: bool,
}

/// Result of one fixed-p EM fit.
#[derive(Debug, Clone, Copy)]
pub struct EmFit {
    pub tau2: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub converged: bool,
    /// Set when the data could not support a positive variance (all zeros).
    pub degenerate: bool,
}

const EM_TOL: f64 = 1e-8;
const EM_MAX_ITER: usize = 500;
const VAR_FLOOR: f64 = 1e-8;
/// Median of the chi-square(1) distribution, used by the robust sigma start.
const CHI2_MEDIAN: f64 = 0.454_936_423_119_572_85;

pub const P_GRID_MIN: f64 = 0.001;
pub const P_GRID_MAX: f64 = 0.999;
pub const P_GRID_STEP: f64 = 0.002;

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One pass of responsibilities + log likelihood for fixed weights.
/// Returns (sum r_i x_i^2, sum r_i, loglik). One exp per observation.
fn e_step(x2: &[f64], p: f64, sigma2: f64, alt_var: f64) -> (f64, f64, f64) {
    let lw0 = (1.0 - p).ln() - 0.5 * sigma2.ln() - LN_SQRT_2PI;
    let lwa = p.ln() - 0.5 * alt_var.ln() - LN_SQRT_2PI;
    let inv0 = 0.5 / sigma2;
    let inva = 0.5 / alt_var;
    let mut sum_r = 0.0;
    let mut sum_rx2 = 0.0;
    let mut ll = 0.0;
    for &x2i in x2 {
        let a = lw0 - inv0 * x2i; // log((1-p) phi0)
        let b = lwa - inva * x2i; // log(p phiA)
        let (r, l) = if a >= b {
            let e = (b - a).exp();
            (e / (1.0 + e), a + e.ln_1p())
        } else {
            let e = (a - b).exp();
            (1.0 / (1.0 + e), b + e.ln_1p())
        };
        sum_r += r;
        sum_rx2 += r * x2i;
        ll += l;
    }
    (sum_rx2, sum_r, ll)
}

/// EM for the component variances at fixed p.
///
/// E-step: responsibilities `r_i = p phi(x_i; 0, sigma^2 + tau^2) / f(x_i)`.
/// M-step: `sigma^2 + tau^2 = sum r_i x_i^2 / sum r_i` and, when sigma is
/// unknown, `sigma^2 = sum (1 - r_i) x_i^2 / sum (1 - r_i)`; the alternative
/// variance is clamped at `sigma^2` (tau^2 >= 0), which is the constrained
/// M-step, so the log likelihood never decreases. Stops when the gain drops
/// below 1e-8 or after 500 iterations.
pub fn em_fit_given_p(xs: &[f64], p: f64, sigma_known: Option<f64>) -> EmFit {
    debug_assert!(p > 0.0 && p < 1.0);
    let m = xs.len() as f64;
    let x2: Vec<f64> = xs.iter().map(|&x| x * x).collect();
    let m2 = x2.iter().sum::<f64>() / m;

    let mut degenerate = false;
    let (mut sigma2, mut alt_var) = match sigma_known {
        Some(s2) => {
            let tau0 = (m2 - s2).max(0.1 * m2).max(VAR_FLOOR);
            (s2, s2 + tau0)
        }
        None => {
            let med = median_of(x2.clone());
            let mut s0 = (med / CHI2_MEDIAN).min(m2);
            if s0 <= 0.0 {
                s0 = VAR_FLOOR;
                degenerate = true;
            }
            let tau0 = (m2 - s0).max(0.1 * m2).max(VAR_FLOOR);
            (s0, s0 + tau0)
        }
    };
    if m2 <= 0.0 {
        // all-zero input: no information about the variances at all
        return EmFit { tau2: 0.0, sigma2: VAR_FLOOR, loglik: f64::NAN, converged: true, degenerate: true };
    }

    let mut last_ll = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..EM_MAX_ITER {
        let (sum_rx2, sum_r, ll) = e_step(&x2, p, sigma2, alt_var);
        debug_assert!(
            ll >= last_ll - 1e-9 * (1.0 + ll.abs()),
            "EM log likelihood decreased: {last_ll} -> {ll}"
        );
        if ll - last_ll < EM_TOL && last_ll.is_finite() {
            converged = true;
            break;
        }
        last_ll = ll;

        let va_unc = if sum_r > 0.0 { sum_rx2 / sum_r } else { sigma2 };
        match sigma_known {
            Some(s2) => {
                alt_var = va_unc.max(s2);
            }
            None => {
                let sum_u = m - sum_r;
                let s_unc = if sum_u > 0.0 { (m * m2 - sum_rx2) / sum_u } else { m2 };
                if va_unc >= s_unc {
                    sigma2 = s_unc.max(VAR_FLOOR);
                    alt_var = va_unc.max(sigma2);
                } else {
                    // constrained optimum collapses both components
                    sigma2 = m2.max(VAR_FLOOR);
                    alt_var = sigma2;
                }
            }
        }
    }

    EmFit {
        tau2: (alt_var - sigma2).max(0.0),
        sigma2,
        loglik: last_ll,
        converged,
        degenerate,
    }
}

/// Moment fit of the variances at fixed p.
///
/// Known sigma: `(sigma^2 + tau^2)^2 = (m4_hat / 3 - (1 - p) sigma^4) / p`
/// (positive root, clamped below at `sigma^2`). Unknown sigma: the pair of
/// equations `m2_hat = sigma^2 + p tau^2` and
/// `m4_hat = 3 [(1-p) sigma^4 + p (sigma^2 + tau^2)^2]` reduces to
/// `tau^4 = (m4_hat / 3 - m2_hat^2) / (p (1 - p))`.
/// Returns (tau2, sigma2, clamped).
pub fn moment_fit_given_p(m2: f64, m4: f64, p: f64, sigma_known: Option<f64>) -> (f64, f64, bool) {
    debug_assert!(p > 0.0 && p < 1.0);
    match sigma_known {
        Some(s2) => {
            let rhs = (m4 / 3.0 - (1.0 - p) * s2 * s2) / p;
            if rhs <= s2 * s2 {
                (0.0, s2, true)
            } else {
                (rhs.sqrt() - s2, s2, false)
            }
        }
        None => {
            let num = m4 / 3.0 - m2 * m2;
            let mut clamped = false;
            let tau2 = if num <= 0.0 {
                clamped = true;
                0.0
            } else {
                (num / (p * (1.0 - p))).sqrt()
            };
            let mut sigma2 = m2 - p * tau2;
            let floor = VAR_FLOOR * m2.max(1.0);
            if sigma2 < floor {
                sigma2 = floor;
                clamped = true;
            }
            (tau2, sigma2, clamped)
        }
    }
}

struct ProfilePoint {
    tau2: f64,
    sigma2: f64,
    objective: f64,
    converged: bool,
}

fn golden_section<F: FnMut(f64) -> ProfilePoint>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    eval: &mut F,
) -> (f64, ProfilePoint) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while b - a > tol {
        if fc.objective >= fd.objective {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    if fc.objective >= fd.objective {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn maximize_over_p<F: FnMut(f64) -> ProfilePoint>(
    mut eval: F,
    method: EstimatorMethod,
    sigma_known: bool,
) -> EstimateSet {
    let n_grid = ((P_GRID_MAX - P_GRID_MIN) / P_GRID_STEP).round() as usize + 1;
    let mut best_p = P_GRID_MIN;
    let mut best = ProfilePoint { tau2: 0.0, sigma2: 0.0, objective: f64::NEG_INFINITY, converged: true };
    let mut best_idx = 0usize;
    let mut all_converged = true;
    for i in 0..n_grid {
        let p = P_GRID_MIN + i as f64 * P_GRID_STEP;
        let point = eval(p);
        all_converged &= point.converged;
        if point.objective > best.objective {
            best_p = p;
            best_idx = i;
            best = point;
        }
    }
    let boundary = best_idx == 0 || best_idx == n_grid - 1;

    let lo = (best_p - P_GRID_STEP).max(P_GRID_MIN);
    let hi = (best_p + P_GRID_STEP).min(P_GRID_MAX);
    let (p_refined, refined) = golden_section(lo, hi, 1e-4, &mut eval);
    let (p_hat, point) = if refined.objective > best.objective {
        (p_refined, refined)
    } else {
        (best_p, best)
    };

    EstimateSet {
        p_hat,
        tau2_hat: point.tau2,
        sigma2_hat: point.sigma2,
        sigma_known,
        method,
        converged: all_converged && point.converged,
        boundary,
    }
}

/// PEB1's estimator: maximize the EM-profiled log likelihood over p.
pub fn profile_mle(xs: &[f64], sigma_known: Option<f64>) -> Result<EstimateSet> {
    if xs.len() < 2 {
        return Err(Error::ParamDomain("profile_mle needs m >= 2".into()));
    }
    Ok(maximize_over_p(
        |p| {
            let fit = em_fit_given_p(xs, p, sigma_known);
            ProfilePoint { tau2: fit.tau2, sigma2: fit.sigma2, objective: fit.loglik, converged: fit.converged }
        },
        EstimatorMethod::ProfileMle,
        sigma_known.is_some(),
    ))
}

/// PEB2's estimator: maximize the profile log likelihood plus the log prior
/// `(beta - 1) log(1 - p)` over p, with variances fit by `fit`.
pub fn penalized_mle(
    xs: &[f64],
    prior: &PriorP,
    sigma_known: Option<f64>,
    fit: VarianceFit,
) -> Result<EstimateSet> {
    if xs.len() < 2 {
        return Err(Error::ParamDomain("penalized_mle needs m >= 2".into()));
    }
    PriorP::new(prior.beta)?;
    let m = xs.len() as f64;
    let x2: Vec<f64> = xs.iter().map(|&x| x * x).collect();
    let m2 = x2.iter().sum::<f64>() / m;
    let m4 = x2.iter().map(|&v| v * v).sum::<f64>() / m;
    let penalty = prior.beta - 1.0;

    Ok(maximize_over_p(
        |p| {
            let (tau2, sigma2, converged) = match fit {
                VarianceFit::Moments => {
                    let (t2, s2, _clamped) = moment_fit_given_p(m2, m4, p, sigma_known);
                    (t2, s2, true)
                }
                VarianceFit::Em => {
                    let f = em_fit_given_p(xs, p, sigma_known);
                    (f.tau2, f.sigma2, f.converged)
                }
            };
            let ll = mixture_loglik(&x2, p, sigma2, sigma2 + tau2);
            ProfilePoint { tau2, sigma2, objective: ll + penalty * (1.0 - p).ln(), converged }
        },
        EstimatorMethod::Penalized(fit),
        sigma_known.is_some(),
    ))
}

/// Mixture log likelihood from precomputed squares.
fn mixture_loglik(x2: &[f64], p: f64, sigma2: f64, alt_var: f64) -> f64 {
    if alt_var <= sigma2 {
        // single-component limit
        let lw = -0.5 * sigma2.ln() - LN_SQRT_2PI;
        let inv = 0.5 / sigma2;
        return x2.iter().map(|&v| lw - inv * v).sum();
    }
    let (_, _, ll) = e_step(x2, p, sigma2, alt_var);
    ll
}

/// Plug the estimates into the 0-1-loss Bayes threshold.
///
/// Boundary conventions: `p_hat <= 0.001` rejects nothing (the threshold
/// diverges) and `p_hat >= 0.999` rejects everything. A zero `tau2_hat`
/// makes the likelihood ratio flat, so the rule falls back to the prior
/// odds: reject all iff `p_hat > 0.5`.
pub fn peb_decide(xs: &[f64], est: &EstimateSet) -> DecisionVector {
    let m = xs.len();
    if est.p_hat <= P_GRID_MIN {
        return DecisionVector::reject_none(m);
    }
    if est.p_hat >= P_GRID_MAX {
        return DecisionVector::reject_all(m);
    }
    if est.tau2_hat <= 0.0 {
        return if est.p_hat > 0.5 {
            DecisionVector::reject_all(m)
        } else {
            DecisionVector::reject_none(m)
        };
    }
    let params = ModelParams { p: est.p_hat, sigma2: est.sigma2_hat, tau2: est.tau2_hat };
    oracle_decide(xs, &params, &LossMatrix::ZERO_ONE)
        .expect("estimates form valid mixture parameters")
}

/// Modified step-up rule at the estimated parameters: p-values from the
/// fitted sigma, `m_eff = m (1 - p_hat)`.
pub fn bh_plugin_decide(xs: &[f64], est: &EstimateSet, alpha: f64) -> Result<DecisionVector> {
    let m = xs.len();
    let sigma = est.sigma2_hat.sqrt();
    let pvalues: Vec<f64> = xs.iter().map(|&x| two_sided_pvalue(x, sigma)).collect();
    let m_eff = m as f64 * (1.0 - clamp_phat_for_m_eff(est.p_hat, m));
    bh_step_up(&pvalues, &StepUpConfig::new(alpha, m_eff)?)
}

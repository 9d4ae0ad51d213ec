//! The Bayes oracle, its risk, and closed-form BFDR/FDR of fixed-threshold
//! rules.
//!
//! With losses `delta0` (type I) and `deltaA` (type II) the risk of a rule
//! with per-test error rates `(t1, t2)` is
//!
//! ```text
//! BR = delta0 (1 - p) t1 + deltaA p t2,
//! ```
//!
//! minimized by rejecting when the likelihood ratio `fA(x) / f0(x)` exceeds
//! `(1 - p) delta0 / (p deltaA)`. Under the Gaussian mixture that rule is
//! the threshold `X^2 > c^2` with
//!
//! ```text
//! c^2 = [2 (sigma^2 + tau^2) sigma^2 / tau^2]
//!       * [log((sigma^2 + tau^2) / sigma^2) / 2 + log(delta0 (1-p) / (deltaA p))].
//! ```
//!
//! With 0-1 loss the risk is the misclassification probability MP.

use crate::error::Result;
use crate::frequentist::DecisionVector;
use crate::gauss::{log_norm_pdf, norm_sf};
use crate::model::ModelParams;

/// Losses for the two error types; `delta0 + deltaA > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LossMatrix {
    pub delta0: f64,
    pub delta_a: f64,
}

impl LossMatrix {
    pub const ZERO_ONE: LossMatrix = LossMatrix { delta0: 1.0, delta_a: 1.0 };

    /// The loss pair under which BFDR control at `alpha` is Bayes-risk
    /// control: `delta0 = 1 - alpha`, `deltaA = alpha`.
    pub fn bfdr_equivalent(alpha: f64) -> Self {
        Self { delta0: 1.0 - alpha, delta_a: alpha }
    }
}

/// Per-test type I and type II error probabilities of a threshold rule.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRates {
    pub t1: f64,
    pub t2: f64,
}

/// Threshold c of the Bayes rule rejecting when `X^2 > c^2`.
///
/// Returns `+inf` at p = 0 (never reject) and 0 whenever the bracketed term
/// is non-positive (always reject), which covers p = 1 with `delta0 > 0`.
pub fn oracle_threshold(params: &ModelParams, loss: &LossMatrix) -> f64 {
    if params.p == 0.0 || loss.delta_a == 0.0 {
        return f64::INFINITY;
    }
    if params.p == 1.0 || loss.delta0 == 0.0 {
        return 0.0;
    }
    let alt_var = params.alt_var();
    let prefactor = 2.0 * alt_var * params.sigma2 / params.tau2;
    let term = 0.5 * (alt_var / params.sigma2).ln()
        + (loss.delta0 * (1.0 - params.p) / (loss.delta_a * params.p)).ln();
    let c2 = prefactor * term;
    if c2 <= 0.0 {
        0.0
    } else {
        c2.sqrt()
    }
}

/// Exact Gaussian-tail error rates of the rule `|X| > threshold`.
pub fn per_test_error_rates(params: &ModelParams, threshold: f64) -> ErrorRates {
    if threshold.is_infinite() {
        return ErrorRates { t1: 0.0, t2: 1.0 };
    }
    let t1 = 2.0 * norm_sf(threshold / params.sigma2.sqrt());
    let t2 = 1.0 - 2.0 * norm_sf(threshold / params.alt_var().sqrt());
    ErrorRates { t1, t2 }
}

/// `delta0 (1 - p) t1 + deltaA p t2`; equals MP under 0-1 loss.
pub fn bayes_risk(params: &ModelParams, rates: &ErrorRates, loss: &LossMatrix) -> f64 {
    loss.delta0 * (1.0 - params.p) * rates.t1 + loss.delta_a * params.p * rates.t2
}

/// Closed-form misclassification probability of the 0-1 loss oracle.
pub fn oracle_mp(params: &ModelParams) -> f64 {
    let c = oracle_threshold(params, &LossMatrix::ZERO_ONE);
    bayes_risk(params, &per_test_error_rates(params, c), &LossMatrix::ZERO_ONE)
}

/// Probability that a single test rejects: `(1-p) t1 + p (1 - t2)`.
pub fn rejection_rate(params: &ModelParams, rates: &ErrorRates) -> f64 {
    (1.0 - params.p) * rates.t1 + params.p * (1.0 - rates.t2)
}

/// `BFDR = (1-p) t1 / [(1-p) t1 + p (1 - t2)]`, with the convention that an
/// empty rejection region under p = 0 has BFDR 1.
pub fn bfdr_of_threshold(params: &ModelParams, rates: &ErrorRates) -> f64 {
    let num = (1.0 - params.p) * rates.t1;
    let denom = rejection_rate(params, rates);
    if denom <= 0.0 {
        1.0
    } else {
        num / denom
    }
}

/// Frequentist FDR at m tests via `FDR = pFDR * P(R > 0)` with
/// `P(R > 0) = 1 - (1 - rho)^m`.
pub fn fdr_of_threshold(params: &ModelParams, rates: &ErrorRates, m: usize) -> f64 {
    let rho = rejection_rate(params, rates);
    let p_reject_some = 1.0 - (1.0 - rho).powi(m as i32);
    bfdr_of_threshold(params, rates) * p_reject_some
}

/// The two sides of the BFDR / Bayes-risk equivalence:
/// `BFDR < alpha` iff `(1-alpha)(1-p) t1 + alpha p t2 < alpha p`.
pub fn bfdr_risk_equivalence_check(
    params: &ModelParams,
    rates: &ErrorRates,
    alpha: f64,
) -> (bool, bool) {
    let bfdr_controlled = bfdr_of_threshold(params, rates) < alpha;
    let risk = bayes_risk(params, rates, &LossMatrix::bfdr_equivalent(alpha));
    (bfdr_controlled, risk < alpha * params.p)
}

/// Posterior signal probability `P(H_A | x)` under known parameters.
pub fn posterior_alt_prob(x: f64, params: &ModelParams) -> f64 {
    if params.p == 0.0 {
        return 0.0;
    }
    if params.p == 1.0 {
        return 1.0;
    }
    let l0 = (1.0 - params.p).ln() + log_norm_pdf(x, params.sigma2);
    let la = params.p.ln() + log_norm_pdf(x, params.alt_var());
    1.0 / (1.0 + (l0 - la).exp())
}

/// Apply the Bayes rule to observed statistics.
pub fn oracle_decide(xs: &[f64], params: &ModelParams, loss: &LossMatrix) -> Result<DecisionVector> {
    params.validate()?;
    let c = oracle_threshold(params, loss);
    if c.is_infinite() {
        return Ok(DecisionVector::reject_none(xs.len()));
    }
    let c2 = c * c;
    Ok(DecisionVector { reject: xs.iter().map(|&x| x * x > c2).collect() })
}

//! Bonferroni, the Benjamini-Hochberg step-up and its adaptive/modified
//! variants, and the oracle threshold that controls BFDR at a given level.
//!
//! The step-up rule with ordered p-values `P(1) <= ... <= P(m)` finds
//! `k = max { i : P(i) <= i alpha / m_eff }` and rejects every hypothesis
//! with a p-value at most `P(k)`. `m_eff = m` is classic BH, `m_eff = m0`
//! the adaptive variant, and `m_eff = m (1 - p)` the modified variant that
//! holds FDR exactly at `alpha` under the mixture model.

use crate::error::{Error, Result};
use crate::gauss::norm_sf;
use crate::model::ModelParams;

/// Per-hypothesis reject/accept output of any procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionVector {
    pub reject: Vec<bool>,
}

impl DecisionVector {
    pub fn reject_none(m: usize) -> Self {
        Self { reject: vec![false; m] }
    }

    pub fn reject_all(m: usize) -> Self {
        Self { reject: vec![true; m] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.reject.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.reject.is_empty()
    }

    pub fn n_rejections(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

/// Level and effective denominator of a step-up rule.
#[derive(Debug, Clone, Copy)]
pub struct StepUpConfig {
    pub alpha: f64,
    pub m_eff: f64,
}

impl StepUpConfig {
    pub fn new(alpha: f64, m_eff: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::ParamDomain(format!("alpha = {alpha} not in (0, 1)")));
        }
        if !(m_eff > 0.0 && m_eff.is_finite()) {
            return Err(Error::ParamDomain(format!("m_eff = {m_eff} not > 0")));
        }
        Ok(Self { alpha, m_eff })
    }
}

/// Clamp an estimated signal fraction so that `m (1 - p_hat)` stays positive.
pub fn clamp_phat_for_m_eff(p_hat: f64, m: usize) -> f64 {
    let cap = 1.0 - 1.0 / (2.0 * m as f64);
    p_hat.min(cap).max(0.0)
}

/// Reject every hypothesis with p-value at most `alpha / m`.
pub fn bonferroni(pvalues: &[f64], alpha: f64) -> DecisionVector {
    let m = pvalues.len();
    if m == 0 {
        return DecisionVector::reject_none(0);
    }
    let threshold = alpha / m as f64;
    DecisionVector { reject: pvalues.iter().map(|&p| p <= threshold).collect() }
}

/// Step-up procedure over the ordered p-values.
///
/// Ties share the same fate: rejection is by the p-value cutoff `P(k)`, not
/// by rank. Thresholds `i alpha / m_eff` are used with the real-valued
/// `m_eff` directly, without rounding.
pub fn bh_step_up(pvalues: &[f64], cfg: &StepUpConfig) -> Result<DecisionVector> {
    StepUpConfig::new(cfg.alpha, cfg.m_eff)?;
    let m = pvalues.len();
    if m == 0 {
        return Ok(DecisionVector::reject_none(0));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cutoff = None;
    for i in (0..m).rev() {
        if sorted[i] <= (i + 1) as f64 * cfg.alpha / cfg.m_eff {
            cutoff = Some(sorted[i]);
            break;
        }
    }
    Ok(match cutoff {
        None => DecisionVector::reject_none(m),
        Some(c) => DecisionVector { reject: pvalues.iter().map(|&p| p <= c).collect() },
    })
}

/// BFDR of the one-sided tail rule at x under the mixture; by the symmetry
/// of both components this equals the BFDR of the two-sided rule |X| > x.
fn tail_bfdr(x: f64, params: &ModelParams) -> f64 {
    let s0 = norm_sf(x / params.sigma2.sqrt());
    let sa = norm_sf(x / params.alt_var().sqrt());
    let num = (1.0 - params.p) * s0;
    let denom = num + params.p * sa;
    if denom <= 0.0 {
        1.0
    } else {
        num / denom
    }
}

/// Smallest |X|-threshold whose BFDR is below `alpha`.
///
/// Found by bisection on the tail ratio, which is monotone decreasing in x,
/// to absolute tolerance 1e-8. Requires p > 0; at p = 0 the BFDR is
/// identically 1 and no threshold exists.
pub fn bfdr_threshold(params: &ModelParams, alpha: f64) -> Result<f64> {
    params.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ParamDomain(format!("alpha = {alpha} not in (0, 1)")));
    }
    if params.p == 0.0 {
        return Err(Error::NoThreshold("BFDR = pFDR = 1 when p = 0".into()));
    }
    if tail_bfdr(0.0, params) < alpha {
        return Ok(0.0);
    }
    let sigma = params.sigma2.sqrt();
    let mut hi = sigma * (2.0 * 200.0f64.ln()).sqrt() + 6.0 * sigma;
    let mut guard = 0;
    while tail_bfdr(hi, params) >= alpha {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::NoThreshold(format!(
                "tail ratio never drops below alpha = {alpha}"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if tail_bfdr(mid, params) < alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, LossMatrix};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bonferroni_basics() {
        let d = bonferroni(&[0.0001, 0.3], 0.05);
        assert_eq!(d.reject, vec![true, false]);
        let d = bonferroni(&[1.0; 5], 0.05);
        assert_eq!(d.n_rejections(), 0);
        assert_eq!(bonferroni(&[], 0.05).len(), 0);
    }

    #[test]
    fn step_up_hand_example() {
        let cfg = StepUpConfig::new(0.05, 4.0).unwrap();
        let d = bh_step_up(&[0.001, 0.02, 0.03, 0.5], &cfg).unwrap();
        assert_eq!(d.reject, vec![true, true, true, false]);
    }

    #[test]
    fn step_up_rejects_nothing_above_alpha() {
        let cfg = StepUpConfig::new(0.05, 6.0).unwrap();
        let d = bh_step_up(&[0.6, 0.7, 0.9, 0.51, 0.99, 0.77], &cfg).unwrap();
        assert_eq!(d.n_rejections(), 0);
    }

    #[test]
    fn step_up_monotone_in_alpha() {
        let pv = [0.004, 0.011, 0.039, 0.041, 0.2, 0.8, 0.013];
        let mut prev = 0;
        for i in 1..20 {
            let cfg = StepUpConfig::new(0.01 * i as f64, pv.len() as f64).unwrap();
            let n = bh_step_up(&pv, &cfg).unwrap().n_rejections();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(StepUpConfig::new(0.05, 0.0).is_err());
        assert!(StepUpConfig::new(0.0, 4.0).is_err());
        assert!(bh_step_up(&[0.5], &StepUpConfig { alpha: 0.05, m_eff: -1.0 }).is_err());
    }

    #[test]
    fn bfdr_threshold_degenerate_cases() {
        let all_signal = ModelParams::new(1.0, 1.0, 4.0).unwrap();
        assert_abs_diff_eq!(bfdr_threshold(&all_signal, 0.1).unwrap(), 0.0, epsilon = 1e-8);
        let no_signal = ModelParams::new(0.0, 1.0, 4.0).unwrap();
        assert!(bfdr_threshold(&no_signal, 0.1).is_err());
    }

    // The BFDR of the 0-1 loss oracle threshold, fed back in as alpha, must
    // recover that same threshold.
    #[test]
    fn bfdr_threshold_matches_oracle_cross_check() {
        let params = ModelParams::new(0.025, 1.0, 2.0 * 200.0f64.ln()).unwrap();
        let c_oracle = oracle::oracle_threshold(&params, &LossMatrix::ZERO_ONE);
        assert_abs_diff_eq!(c_oracle, 3.2711, epsilon = 5e-4);
        let alpha = tail_bfdr(c_oracle, &params);
        assert_abs_diff_eq!(alpha, 0.1103, epsilon = 5e-4);
        let c_fdr = bfdr_threshold(&params, alpha).unwrap();
        assert_abs_diff_eq!(c_fdr, c_oracle, epsilon = 1e-6);
    }

    #[test]
    fn bfdr_threshold_decreasing_in_alpha_and_tight() {
        let params = ModelParams::new(0.05, 1.0, 2.0 * 200.0f64.ln()).unwrap();
        let mut last = f64::INFINITY;
        for &alpha in &[0.02, 0.05, 0.1, 0.2, 0.4] {
            let c = bfdr_threshold(&params, alpha).unwrap();
            assert!(c < last);
            last = c;
            // value is below alpha at c and at least alpha - 1e-6 just inside
            let rates = oracle::per_test_error_rates(&params, c);
            assert!(oracle::bfdr_of_threshold(&params, &rates) < alpha);
            let rates_in = oracle::per_test_error_rates(&params, c - 1e-4);
            assert!(oracle::bfdr_of_threshold(&params, &rates_in) >= alpha - 1e-6);
        }
    }
}

//! Confusion counting and replicate-level estimation of FDR, pFDR,
//! misclassification probability, power and efficiency.
//!
//! Conventions: `FDR = E(V / R)` with `V / R = 0` when `R = 0`;
//! `pFDR = E(V / R | R > 0)`; `MP = E(V + T) / m`;
//! `power = E(S / m1 | m1 > 0)`; `efficiency = oracle MP / MP`. Replicates
//! with `m1 = 0` are excluded from power but still count toward FDR and MP.

use crate::error::{Error, Result};
use crate::frequentist::DecisionVector;

/// Cross-tabulation of decisions against the latent truth.
///
/// `u`: true nulls accepted, `v`: true nulls rejected (false discoveries),
/// `t`: signals accepted (misses), `s`: signals rejected (true discoveries).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub u: usize,
    pub v: usize,
    pub t: usize,
    pub s: usize,
}

impl ConfusionCounts {
    #[inline]
    pub fn m0(&self) -> usize {
        self.u + self.v
    }

    #[inline]
    pub fn m1(&self) -> usize {
        self.t + self.s
    }

    #[inline]
    pub fn n_rejected(&self) -> usize {
        self.v + self.s
    }

    #[inline]
    pub fn n_accepted(&self) -> usize {
        self.u + self.t
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.u + self.v + self.t + self.s
    }

    /// False discovery proportion with the 0/0 -> 0 convention.
    pub fn fdp(&self) -> f64 {
        let r = self.n_rejected();
        if r == 0 {
            0.0
        } else {
            self.v as f64 / r as f64
        }
    }

    /// Fraction of hypotheses misclassified.
    pub fn misclassification(&self) -> f64 {
        (self.v + self.t) as f64 / self.m() as f64
    }
}

/// Tabulate one decision vector against the truth.
pub fn confusion(decisions: &DecisionVector, gamma: &[bool]) -> Result<ConfusionCounts> {
    if decisions.len() != gamma.len() {
        return Err(Error::LengthMismatch { left: decisions.len(), right: gamma.len() });
    }
    let mut c = ConfusionCounts { u: 0, v: 0, t: 0, s: 0 };
    for (&rej, &sig) in decisions.reject.iter().zip(gamma) {
        match (sig, rej) {
            (false, false) => c.u += 1,
            (false, true) => c.v += 1,
            (true, false) => c.t += 1,
            (true, true) => c.s += 1,
        }
    }
    Ok(c)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Replicate-level operating characteristics.
#[derive(Debug, Clone)]
pub struct MetricEstimates {
    pub fdr: Estimate,
    /// Missing when no replicate rejected anything.
    pub pfdr: Option<Estimate>,
    pub mp: Estimate,
    /// Missing when no replicate contained a signal.
    pub power: Option<Estimate>,
    /// `oracle_mp / mp`, present when an oracle MP was supplied and mp > 0.
    pub efficiency: Option<Estimate>,
    pub reps: usize,
    pub reps_with_rejection: usize,
    pub reps_with_signal: usize,
}

fn mean_and_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Estimate { value: mean, se: f64::NAN };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Estimate { value: mean, se: (var / n).sqrt() }
}

/// Aggregate per-replicate confusion counts into metric estimates.
pub fn summarize(per_replicate: &[ConfusionCounts], oracle_mp: Option<f64>) -> Result<MetricEstimates> {
    if per_replicate.is_empty() {
        return Err(Error::EmptyInput("summarize needs at least one replicate".into()));
    }
    let fdps: Vec<f64> = per_replicate.iter().map(|c| c.fdp()).collect();
    let mps: Vec<f64> = per_replicate.iter().map(|c| c.misclassification()).collect();
    let pfdps: Vec<f64> = per_replicate
        .iter()
        .filter(|c| c.n_rejected() > 0)
        .map(|c| c.fdp())
        .collect();
    let powers: Vec<f64> = per_replicate
        .iter()
        .filter(|c| c.m1() > 0)
        .map(|c| c.s as f64 / c.m1() as f64)
        .collect();

    let fdr = mean_and_se(&fdps);
    let mp = mean_and_se(&mps);
    let pfdr = if pfdps.is_empty() { None } else { Some(mean_and_se(&pfdps)) };
    let power = if powers.is_empty() { None } else { Some(mean_and_se(&powers)) };
    let efficiency = oracle_mp.and_then(|omp| {
        if mp.value > 0.0 {
            // first-order error propagation through the ratio
            Some(Estimate { value: omp / mp.value, se: omp * mp.se / (mp.value * mp.value) })
        } else {
            None
        }
    });

    Ok(MetricEstimates {
        fdr,
        pfdr,
        mp,
        power,
        efficiency,
        reps: per_replicate.len(),
        reps_with_rejection: pfdps.len(),
        reps_with_signal: powers.len(),
    })
}

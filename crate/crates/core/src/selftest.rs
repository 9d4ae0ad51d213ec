//! The acceptance suite: every reproduction criterion as a library
//! function, shared by the `acceptance` integration tests and the CLI
//! `selftest` subcommand.
//!
//! Each criterion runs at its pinned scale and tolerance and reports one
//! pass/fail line per check. `quick` mode cuts replicate counts for smoke
//! runs only; tolerances never change. Two criteria are marked slow
//! (`6` and `10b`) and are skipped unless requested.
//!
//! Known discrepancies (see `docs/assumptions.md`): the reference value
//! K12 = 0.083 for the first confusion pair is inconsistent with the same
//! source's E(D12) = 3.93 (exact quadrature gives K12 = 0.019396), and the
//! normal approximation differs from direct simulation by ~0.025 there; the
//! oracle misclassification at p = 0.5 is exactly 23.545%, which misses the
//! 23.5 reference by more than the pinned 0.02pp. The corresponding checks
//! are implemented as stated and are expected to fail.

use serde::Serialize;

use crate::error::Result;
use crate::fixtures::{identify_fixtures, lookup, table3_config, table3_fixtures, FixtureSource};
use crate::harness::{run_experiment, toy_compare, Procedure, ResultRow, TauRule, ToyConfig};
use crate::identify::{
    kl_mc, variance_matched_full, variance_matched_null, wrong_model_prob, wrong_model_prob_direct,
};
use crate::model::{sample_dataset, AltKind, ModelParams};
use crate::oracle::{
    bfdr_risk_equivalence_check, fdr_of_threshold, oracle_mp, oracle_threshold,
    per_test_error_rates, ErrorRates, LossMatrix,
};
use crate::stream::derive_stream;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub criterion: String,
    pub label: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn abs(criterion: &str, label: impl Into<String>, observed: f64, expected: f64, tol: f64) -> Self {
        Self {
            criterion: criterion.to_string(),
            label: label.into(),
            observed,
            expected,
            tolerance: tol,
            pass: (observed - expected).abs() <= tol && observed.is_finite(),
        }
    }

    fn greater_than(criterion: &str, label: impl Into<String>, observed: f64, floor: f64) -> Self {
        Self {
            criterion: criterion.to_string(),
            label: label.into(),
            observed,
            expected: floor,
            tolerance: 0.0,
            pass: observed > floor,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "  [{}] {}: observed {:.6}, expected {:.6} (tol {:.6})",
            if self.pass { "pass" } else { "FAIL" },
            self.label,
            self.observed,
            self.expected,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: &'static str,
    pub title: &'static str,
    pub slow: bool,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary_line(&self) -> String {
        let n_pass = self.checks.iter().filter(|c| c.pass).count();
        format!(
            "criterion {:>3} [{}] {} ({n_pass}/{} checks)",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.title,
            self.checks.len()
        )
    }
}

fn scaled(reps: usize, quick: bool) -> usize {
    if quick {
        (reps / 20).max(50)
    } else {
        reps
    }
}

fn metric_of(rows: &[ResultRow], procedure: &str, p: f64, metric: &str) -> (f64, f64) {
    rows.iter()
        .find(|r| r.procedure == procedure && (r.p_true - p).abs() < 1e-12 && r.metric == metric)
        .map(|r| (r.estimate, r.mc_se))
        .unwrap_or((f64::NAN, f64::NAN))
}

fn reference(sigma_known: bool, procedure: &str, p: f64, metric: &str) -> f64 {
    lookup(&table3_fixtures(sigma_known), procedure, p, metric, FixtureSource::Reference)
        .unwrap_or(f64::NAN)
}

/// Criterion 1: the closed-form oracle reproduces the reference
/// misclassification column to 0.02pp and simulation matches the closed
/// form to 0.1pp at 1e4 replicates.
pub fn criterion_1(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.0, 0.025, 0.05, 0.2, 0.5, 0.8];
    let mut checks = Vec::new();
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::BayesOracle];
    cfg.reps = scaled(10_000, quick);

    let mut closed = Vec::new();
    for &p in &p_grid {
        let params = cfg.params_at(p)?;
        let mp = 100.0 * oracle_mp(&params);
        closed.push(mp);
        let expected = 100.0 * reference(true, "BO", p, "mp");
        checks.push(Check::abs("1", format!("closed-form BO MP% at p={p}"), mp, expected, 0.02));
    }
    let rows = run_experiment(&cfg)?;
    for (i, &p) in p_grid.iter().enumerate() {
        let (sim, _) = metric_of(&rows, "BO", p, "mp");
        checks.push(Check::abs(
            "1",
            format!("simulated BO MP% at p={p} vs closed form"),
            100.0 * sim,
            closed[i],
            0.1,
        ));
    }
    Ok(CriterionResult { id: "1", title: "closed-form oracle misclassification", slow: false, checks })
}

/// Criterion 2: closed-form oracle FDR (with the P(R > 0) correction)
/// reproduces the reference values at p in {0.025, 0.05} to 0.3pp, and
/// simulation cross-checks the closed form to 0.3pp.
pub fn criterion_2(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.025, 0.05];
    let mut checks = Vec::new();
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::BayesOracle];
    cfg.reps = scaled(10_000, quick);

    let mut closed = Vec::new();
    for &p in &p_grid {
        let params = cfg.params_at(p)?;
        let c = oracle_threshold(&params, &LossMatrix::ZERO_ONE);
        let rates = per_test_error_rates(&params, c);
        let fdr = 100.0 * fdr_of_threshold(&params, &rates, cfg.m);
        closed.push(fdr);
        let expected = 100.0 * reference(true, "BO", p, "fdr");
        checks.push(Check::abs("2", format!("closed-form BO FDR% at p={p}"), fdr, expected, 0.3));
    }
    let rows = run_experiment(&cfg)?;
    for (i, &p) in p_grid.iter().enumerate() {
        let (sim, _) = metric_of(&rows, "BO", p, "fdr");
        checks.push(Check::abs(
            "2",
            format!("simulated BO FDR% at p={p} vs closed form"),
            100.0 * sim,
            closed[i],
            0.3,
        ));
    }
    Ok(CriterionResult { id: "2", title: "oracle FDR chain", slow: false, checks })
}

/// Criterion 3: the modified step-up holds FDR at 5.0% and classic BH at
/// 5(1-p)%, both to 0.5pp at 1e4 replicates.
pub fn criterion_3(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.05, 0.2, 0.5];
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::Bh, Procedure::BhModified];
    cfg.reps = scaled(10_000, quick);
    let rows = run_experiment(&cfg)?;

    let mut checks = Vec::new();
    for &p in &p_grid {
        let (fdr_mod, _) = metric_of(&rows, "BHmod", p, "fdr");
        checks.push(Check::abs(
            "3",
            format!("modified BH FDR% at p={p}"),
            100.0 * fdr_mod,
            5.0,
            0.5,
        ));
        let (fdr_bh, _) = metric_of(&rows, "BH", p, "fdr");
        checks.push(Check::abs(
            "3",
            format!("classic BH FDR% at p={p} vs 5(1-p)%"),
            100.0 * fdr_bh,
            5.0 * (1.0 - p),
            0.5,
        ));
    }
    Ok(CriterionResult { id: "3", title: "modified-BH FDR identity", slow: false, checks })
}

/// Criterion 4: PEB2 and BH2 reproduce their reference columns (sigma
/// known) at p in {0, 0.025, 0.05, 0.2}: MP to 1.0pp, FDR to 2.0pp.
pub fn criterion_4(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.0, 0.025, 0.05, 0.2];
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::Peb2, Procedure::Bh2];
    cfg.reps = scaled(10_000, quick);
    let rows = run_experiment(&cfg)?;

    let mut checks = Vec::new();
    for procedure in ["PEB2", "BH2"] {
        for &p in &p_grid {
            let (mp, _) = metric_of(&rows, procedure, p, "mp");
            checks.push(Check::abs(
                "4",
                format!("{procedure} MP% at p={p}"),
                100.0 * mp,
                100.0 * reference(true, procedure, p, "mp"),
                1.0,
            ));
            let (fdr, _) = metric_of(&rows, procedure, p, "fdr");
            checks.push(Check::abs(
                "4",
                format!("{procedure} FDR% at p={p}"),
                100.0 * fdr,
                100.0 * reference(true, procedure, p, "fdr"),
                2.0,
            ));
        }
    }
    Ok(CriterionResult { id: "4", title: "PEB2/BH2 table reproduction (sigma known)", slow: false, checks })
}

/// Criterion 5: the profile-MLE rules misbehave on pure-null data; both
/// PEB1 and BH1 exceed 50% misclassification at p = 0.
pub fn criterion_5(seed: u64, quick: bool) -> Result<CriterionResult> {
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = vec![0.0];
    cfg.procedures = vec![Procedure::Peb1, Procedure::Bh1];
    cfg.reps = scaled(1000, quick);
    let rows = run_experiment(&cfg)?;

    let (peb1, _) = metric_of(&rows, "PEB1", 0.0, "mp");
    let (bh1, _) = metric_of(&rows, "BH1", 0.0, "mp");
    let checks = vec![
        Check::greater_than("5", "PEB1 MP% at p=0 (reference 82.4)", 100.0 * peb1, 50.0),
        Check::greater_than("5", "BH1 MP% at p=0 (reference 73.2)", 100.0 * bh1, 50.0),
    ];
    Ok(CriterionResult { id: "5", title: "PEB1/BH1 null-data failure mode", slow: false, checks })
}

/// Criterion 6 (slow): SB at 500 replicates reproduces its reference MP at
/// p in {0.05, 0.2} to 1.0pp.
pub fn criterion_6(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.05, 0.2];
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::Sb];
    cfg.sb_reps = scaled(500, quick);
    let rows = run_experiment(&cfg)?;

    let mut checks = Vec::new();
    for &p in &p_grid {
        let (mp, _) = metric_of(&rows, "SB", p, "mp");
        checks.push(Check::abs(
            "6",
            format!("SB MP% at p={p}"),
            100.0 * mp,
            100.0 * reference(true, "SB", p, "mp"),
            1.0,
        ));
    }
    Ok(CriterionResult { id: "6", title: "SB at reduced scale", slow: true, checks })
}

/// Criterion 7: NPBN reproduces its reference MP column to 1.0pp across
/// the sparse and dense regimes.
pub fn criterion_7(seed: u64, quick: bool) -> Result<CriterionResult> {
    let p_grid = [0.025, 0.05, 0.2, 0.5, 0.8];
    let mut cfg = table3_config(true);
    cfg.master_seed = seed;
    cfg.p_grid = p_grid.to_vec();
    cfg.procedures = vec![Procedure::Npbn];
    cfg.reps = scaled(10_000, quick);
    let rows = run_experiment(&cfg)?;

    let mut checks = Vec::new();
    for &p in &p_grid {
        let (mp, _) = metric_of(&rows, "NPBN", p, "mp");
        checks.push(Check::abs(
            "7",
            format!("NPBN MP% at p={p}"),
            100.0 * mp,
            100.0 * reference(true, "NPBN", p, "mp"),
            1.0,
        ));
    }
    Ok(CriterionResult { id: "7", title: "NPBN table column (sigma known)", slow: false, checks })
}

/// Criterion 8: identifiability diagnostics for the two variance-matched
/// confusion pairs; Monte Carlo moments against the reference and derived
/// values, the normal approximation of the wrong-model probability, and
/// its agreement with direct simulation.
pub fn criterion_8(seed: u64, quick: bool) -> Result<CriterionResult> {
    let fixtures = identify_fixtures();
    let tau2 = 2.0 * 200.0f64.ln();
    let mut checks = Vec::new();

    struct Example {
        tag: &'static str,
        p: f64,
        n_mc: usize,
        k_ref: f64,
        v_ref: Option<f64>,
        p_ref: f64,
    }
    let examples = [
        Example {
            tag: "M2-full",
            p: 0.01,
            n_mc: 2_000_000,
            k_ref: lookup(&fixtures, "M2-full", 0.01, "k12", FixtureSource::Reference).unwrap(),
            v_ref: lookup(&fixtures, "M2-full", 0.01, "v12", FixtureSource::Reference),
            p_ref: lookup(&fixtures, "M2-full", 0.01, "wrong_model_prob", FixtureSource::Reference)
                .unwrap(),
        },
        Example {
            tag: "M2-null",
            p: 0.95,
            n_mc: 4_000_000,
            k_ref: lookup(&fixtures, "M2-null", 0.95, "k12", FixtureSource::Reference).unwrap(),
            v_ref: None,
            p_ref: lookup(&fixtures, "M2-null", 0.95, "wrong_model_prob", FixtureSource::Reference)
                .unwrap(),
        },
    ];

    for ex in &examples {
        let m1 = ModelParams::new(ex.p, 1.0, tau2)?;
        let m2 = if ex.tag == "M2-full" {
            variance_matched_full(&m1)?
        } else {
            variance_matched_null(&m1)?
        };
        let n_mc = if quick { 100_000 } else { ex.n_mc };
        let mut rng = derive_stream(seed, 0, &format!("selftest/kl/{}", ex.tag));
        let stats = kl_mc(&m1, &m2, n_mc, &mut rng)?;
        checks.push(Check::abs(
            "8",
            format!("{} K12 (10% relative)", ex.tag),
            stats.k12,
            ex.k_ref,
            0.10 * ex.k_ref,
        ));
        if let Some(v_ref) = ex.v_ref {
            checks.push(Check::abs(
                "8",
                format!("{} V12 (10% relative)", ex.tag),
                stats.v12,
                v_ref,
                0.10 * v_ref,
            ));
        }
        let approx = wrong_model_prob(&stats, 200)?;
        checks.push(Check::abs("8", format!("{} P(D12<0) normal approx", ex.tag), approx, ex.p_ref, 0.03));

        let reps = if quick { 4000 } else { 100_000 };
        let mut rng = derive_stream(seed, 0, &format!("selftest/direct/{}", ex.tag));
        let direct = wrong_model_prob_direct(&m1, &m2, 200, reps, &mut rng)?;
        checks.push(Check::abs(
            "8",
            format!("{} normal approx vs direct simulation", ex.tag),
            approx,
            direct,
            0.02,
        ));
    }
    Ok(CriterionResult { id: "8", title: "identifiability diagnostics", slow: false, checks })
}

/// Criterion 9: the always-on property battery (full versions live in the
/// crate test suites; this runs the same checks at CLI scale).
pub fn criterion_9(seed: u64, _quick: bool) -> Result<CriterionResult> {
    let tau2 = 2.0 * 200.0f64.ln();
    let mut checks = Vec::new();

    // step-up against the brute-force all-subsets definition
    let mut rng = derive_stream(seed, 0, "selftest/stepup");
    let mut mismatches = 0usize;
    use rand::Rng;
    for _ in 0..300 {
        let m = rng.random_range(1..=10);
        let pv: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let alpha = rng.random_range(0.01..0.3);
        let m_eff = rng.random_range(0.5..(m as f64 + 2.0));
        let cfg = crate::frequentist::StepUpConfig { alpha, m_eff };
        let fast = crate::frequentist::bh_step_up(&pv, &cfg)?;
        let brute = brute_force_step_up(&pv, alpha, m_eff);
        if fast.reject != brute {
            mismatches += 1;
        }
    }
    checks.push(Check::abs("9", "step-up vs brute force mismatches (300 cases)", mismatches as f64, 0.0, 0.0));

    // three-way oracle rule equivalence
    let mut rng = derive_stream(seed, 0, "selftest/oracle3");
    let mut disagreements = 0usize;
    for _ in 0..20 {
        let p: f64 = rng.random_range(0.02..0.98);
        let s2: f64 = rng.random_range(0.5..2.0);
        let t2: f64 = rng.random_range(0.5..12.0);
        let params = ModelParams::new(p, s2, t2)?;
        let c = oracle_threshold(&params, &LossMatrix::ZERO_ONE);
        for i in 0..400 {
            let x = -10.0 + i as f64 * 0.05;
            let lr = crate::gauss::log_norm_pdf(x, params.alt_var())
                - crate::gauss::log_norm_pdf(x, params.sigma2);
            let by_lr = lr > ((1.0 - p) / p).ln();
            let by_post = crate::oracle::posterior_alt_prob(x, &params) > 0.5;
            let by_thresh = x * x > c * c;
            if by_lr != by_thresh || by_post != by_thresh {
                disagreements += 1;
            }
        }
    }
    checks.push(Check::abs("9", "oracle rule-form disagreements (8000 points)", disagreements as f64, 0.0, 0.0));

    // BFDR / Bayes-risk equivalence on 1e5 random tuples
    let mut rng = derive_stream(seed, 0, "selftest/eq38");
    let mut eq_violations = 0usize;
    for _ in 0..100_000 {
        let p: f64 = rng.random();
        let rates = ErrorRates { t1: rng.random(), t2: rng.random() };
        let alpha: f64 = rng.random_range(0.01..0.99);
        let params = ModelParams { p, sigma2: 1.0, tau2: 1.0 };
        let (a, b) = bfdr_risk_equivalence_check(&params, &rates, alpha);
        if a != b {
            eq_violations += 1;
        }
    }
    checks.push(Check::abs("9", "BFDR/risk equivalence violations (1e5 tuples)", eq_violations as f64, 0.0, 0.0));

    // recursion mass conservation
    let params = ModelParams::new(0.2, 1.0, tau2)?;
    let mut rng = derive_stream(seed, 0, "selftest/npbn-mass");
    let data = sample_dataset(&params, 200, &AltKind::GaussianSignal, &mut rng)?;
    let (est, _) = crate::npbn::npbn_procedure(&data.x, 1.0)?;
    checks.push(Check::abs("9", "recursion mass conservation |mass - 1|", (est.total_mass() - 1.0).abs(), 0.0, 1e-6));

    // SB small-m quadrature oracle
    let xs = [0.4, -1.9, 4.2];
    let quad = crate::sb::prob_null_by_quadrature(&xs, 22.76, 1.0, 500);
    let sb_cfg = crate::sb::SbConfig { n_iter: 40_000, n_burn: 4000, ..crate::sb::SbConfig::default() };
    let mut rng = derive_stream(seed, 0, "selftest/sb-quad");
    let summary = crate::sb::sb_run(&xs, &sb_cfg, &mut rng)?;
    let max_gap = summary
        .prob_null
        .iter()
        .zip(&quad)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    checks.push(Check::abs("9", "SB vs 2-d quadrature, max gap over 3 points", max_gap, 0.0, 0.01));

    // DPP conditional-weight finiteness and conjugate p0 update
    let mut rng = derive_stream(seed, 0, "selftest/dpp-data");
    let data = sample_dataset(&params, 80, &AltKind::GaussianSignal, &mut rng)?;
    let dpp_cfg = crate::dpp::DppConfig::default();
    let mut chain = crate::dpp::DppChain::new(&data.x, &dpp_cfg)?;
    let mut rng = derive_stream(seed, 0, "selftest/dpp-run");
    let mut weight_failures = 0usize;
    for _ in 0..30 {
        chain.sweep_assignments(&mut rng)?;
        chain.sweep_hyper(&mut rng);
        chain.state.check_partition()?;
        for (i, &x) in data.x.iter().enumerate() {
            let n0 = chain.state.n_zero - usize::from(chain.state.assignment[i] == 0);
            let (w0, wf, wa) = crate::dpp::conditional_weights(&chain.state, x, n0);
            let total = w0 + wf + wa.iter().sum::<f64>();
            if !(total.is_finite() && total > 0.0) {
                weight_failures += 1;
            }
        }
    }
    checks.push(Check::abs("9", "DPP conditional-weight failures (30 sweeps)", weight_failures as f64, 0.0, 0.0));

    {
        use statrs::distribution::{Beta, ContinuousCDF};
        let mut rng = derive_stream(seed, 0, "selftest/dpp-conj");
        let (k_plus, z) = (5usize, 1usize);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| crate::sb::sample_p_given_counts(k_plus, k_plus + z, 22.76, &mut rng))
            .collect();
        let reference = Beta::new(1.0 + k_plus as f64, 22.76 + z as f64).unwrap();
        let ks_p = crate::gof::ks_one_sample(&draws, |x| reference.cdf(x));
        checks.push(Check::greater_than("9", "p0 conjugate-update KS p-value", ks_p, 0.01));
    }

    // moment and EM estimator consistency at n = 1e6
    let big = ModelParams::new(0.2, 1.0, tau2)?;
    let mut rng = derive_stream(seed, 0, "selftest/consistency");
    let data = sample_dataset(&big, 1_000_000, &AltKind::GaussianSignal, &mut rng)?;
    let x2: Vec<f64> = data.x.iter().map(|x| x * x).collect();
    let m2 = x2.iter().sum::<f64>() / x2.len() as f64;
    let m4 = x2.iter().map(|v| v * v).sum::<f64>() / x2.len() as f64;
    let (t2_mom, _, _) = crate::peb::moment_fit_given_p(m2, m4, 0.2, None);
    checks.push(Check::abs(
        "9",
        "moment estimator tau2 relative error at n=1e6",
        (t2_mom - tau2).abs() / tau2,
        0.0,
        0.02,
    ));
    let em = crate::peb::em_fit_given_p(&data.x, 0.2, None);
    checks.push(Check::abs(
        "9",
        "EM estimator tau2 relative error at n=1e6",
        (em.tau2 - tau2).abs() / tau2,
        0.0,
        0.02,
    ));

    Ok(CriterionResult { id: "9", title: "property suites", slow: false, checks })
}

fn brute_force_step_up(pvalues: &[f64], alpha: f64, m_eff: f64) -> Vec<bool> {
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for size in (1..=m).rev() {
        if sorted[size - 1] <= size as f64 * alpha / m_eff {
            let cutoff = sorted[size - 1];
            return pvalues.iter().map(|&p| p <= cutoff).collect();
        }
    }
    vec![false; m]
}

/// Criterion 10a: on the regenerated toy datasets DPP is at least as
/// conservative as SB (no more rejections) on at least 8 of 10.
pub fn criterion_10a(seed: u64, quick: bool) -> Result<CriterionResult> {
    let cfg = ToyConfig {
        master_seed: seed,
        procedures: vec![Procedure::Sb, Procedure::Dpp],
        sb_iter: if quick { 1500 } else { 5000 },
        sb_burn: if quick { 400 } else { 1000 },
        dpp_iter: if quick { 1200 } else { 4000 },
        dpp_burn: if quick { 300 } else { 1000 },
        ..ToyConfig::default()
    };
    let report = toy_compare(&cfg)?;
    let n_datasets = cfg.p_list.len();
    let mut conservative = 0usize;
    for id in 0..n_datasets {
        let rejections = |proc: &str| -> usize {
            report
                .rows
                .iter()
                .find(|r| r.dataset_id == id && r.procedure == proc)
                .map(|r| r.correct + r.false_discoveries)
                .unwrap_or(usize::MAX)
        };
        if rejections("DPP") <= rejections("SB") {
            conservative += 1;
        }
    }
    let checks = vec![Check::greater_than(
        "10a",
        format!("datasets (of {n_datasets}) where DPP rejects no more than SB"),
        conservative as f64,
        7.0,
    )];
    Ok(CriterionResult { id: "10a", title: "DPP vs SB conservatism on toy datasets", slow: false, checks })
}

/// Criterion 10b (slow): SB's misclassification gap to the oracle is
/// nonincreasing over m in {50, 200, 800} (within 3 combined standard
/// errors, p = 0.05, sigma known).
pub fn criterion_10b(seed: u64, quick: bool) -> Result<CriterionResult> {
    let ms = [50usize, 200, 800];
    let reps = [scaled(400, quick), scaled(400, quick), scaled(200, quick)];
    let mut gaps = Vec::new();
    let mut ses = Vec::new();
    for (&m, &r) in ms.iter().zip(&reps) {
        let mut cfg = table3_config(true);
        cfg.m = m;
        cfg.tau_rule = TauRule::Sqrt2LogM;
        cfg.master_seed = seed;
        cfg.p_grid = vec![0.05];
        cfg.procedures = vec![Procedure::Sb];
        cfg.sb_reps = r;
        let rows = run_experiment(&cfg)?;
        let (mp, se) = metric_of(&rows, "SB", 0.05, "mp");
        let omp = oracle_mp(&cfg.params_at(0.05)?);
        gaps.push(mp - omp);
        ses.push(se);
    }
    let mut checks = Vec::new();
    for i in 0..2 {
        let slack = 3.0 * (ses[i] + ses[i + 1]);
        checks.push(Check {
            criterion: "10b".to_string(),
            label: format!(
                "MP gap nonincreasing from m={} ({:.5}) to m={} ({:.5})",
                ms[i],
                gaps[i],
                ms[i + 1],
                gaps[i + 1]
            ),
            observed: gaps[i + 1],
            expected: gaps[i],
            tolerance: slack,
            pass: gaps[i + 1] <= gaps[i] + slack,
        });
    }
    Ok(CriterionResult { id: "10b", title: "SB oracle-gap trend in m", slow: true, checks })
}

/// Run the suite. Slow criteria (6, 10b) run only when `include_slow`.
pub fn run_selftest(seed: u64, include_slow: bool, quick: bool) -> Result<Vec<CriterionResult>> {
    let mut results = vec![
        criterion_1(seed, quick)?,
        criterion_2(seed, quick)?,
        criterion_3(seed, quick)?,
        criterion_4(seed, quick)?,
        criterion_5(seed, quick)?,
        criterion_7(seed, quick)?,
        criterion_8(seed, quick)?,
        criterion_9(seed, quick)?,
        criterion_10a(seed, quick)?,
    ];
    if include_slow {
        results.insert(5, criterion_6(seed, quick)?);
        results.push(criterion_10b(seed, quick)?);
    }
    Ok(results)
}

/// All checks as CSV for the reconciliation artifact.
pub fn checks_to_csv(results: &[CriterionResult]) -> Result<String> {
    let all: Vec<&Check> = results.iter().flat_map(|r| r.checks.iter()).collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for check in all {
        writer.serialize(check)?;
    }
    let bytes = writer.into_inner().map_err(|e| crate::Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

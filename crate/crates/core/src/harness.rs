//! Experiment configuration, deterministic replicate execution, and
//! emission of operating-characteristic tables and figure data.
//!
//! A run is fully determined by `(ExperimentConfig, master_seed)`: datasets
//! for replicate r at signal fraction p come from a stream keyed by
//! `(seed, r, p)` only, so every procedure scores the same datasets (a
//! paired design) and adding or removing procedures never changes them.
//! Replicates execute on a worker pool; aggregation is a sequential fold in
//! replicate order, so results are byte-identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dpp::{dpp_decide, dpp_run, DppConfig};
use crate::error::{Error, Result};
use crate::frequentist::{bh_step_up, bonferroni, clamp_phat_for_m_eff, StepUpConfig};
use crate::gauss::norm_quantile;
use crate::metrics::{confusion, summarize, ConfusionCounts, MetricEstimates};
use crate::model::{sample_dataset, two_sided_pvalue, AltKind, Dataset, ModelParams};
use crate::npbn::{npbn_procedure, npbn_prob_null};
use crate::oracle::{
    bfdr_of_threshold, fdr_of_threshold, oracle_decide, oracle_mp, oracle_threshold,
    per_test_error_rates, LossMatrix,
};
use crate::peb::{bh_plugin_decide, peb_decide, penalized_mle, profile_mle, PriorP, VarianceFit};
use crate::sb::{sb_decide, sb_run, SbConfig};
use crate::stream::{data_purpose, derive_stream};

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The procedures the laboratory knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Procedure {
    /// Bayes oracle at the true parameters (0-1 loss).
    BayesOracle,
    Bonferroni,
    /// Classic step-up with `m_eff = m`.
    Bh,
    /// Modified step-up with `m_eff = m (1 - p_true)`.
    BhModified,
    /// Step-up at the profile-MLE estimates.
    Bh1,
    /// Step-up at the penalized moment estimates.
    Bh2,
    /// Oracle plug-in at the profile-MLE estimates.
    Peb1,
    /// Oracle plug-in at the penalized moment estimates.
    Peb2,
    /// Full-Bayes spike-and-slab sampler.
    Sb,
    /// Dirichlet-process mixture sampler.
    Dpp,
    /// Recursive nonparametric estimator.
    Npbn,
}

impl Procedure {
    pub const ALL: [Procedure; 11] = [
        Procedure::BayesOracle,
        Procedure::Bonferroni,
        Procedure::Bh,
        Procedure::BhModified,
        Procedure::Bh1,
        Procedure::Bh2,
        Procedure::Peb1,
        Procedure::Peb2,
        Procedure::Sb,
        Procedure::Dpp,
        Procedure::Npbn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Procedure::BayesOracle => "BO",
            Procedure::Bonferroni => "Bonf",
            Procedure::Bh => "BH",
            Procedure::BhModified => "BHmod",
            Procedure::Bh1 => "BH1",
            Procedure::Bh2 => "BH2",
            Procedure::Peb1 => "PEB1",
            Procedure::Peb2 => "PEB2",
            Procedure::Sb => "SB",
            Procedure::Dpp => "DPP",
            Procedure::Npbn => "NPBN",
        }
    }

    pub fn parse(s: &str) -> Result<Procedure> {
        Procedure::ALL
            .iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown procedure '{s}'")))
    }

    fn needs_profile_estimate(&self) -> bool {
        matches!(self, Procedure::Bh1 | Procedure::Peb1)
    }

    fn needs_penalized_estimate(&self) -> bool {
        matches!(self, Procedure::Bh2 | Procedure::Peb2)
    }
}

/// How the signal standard deviation scales with m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule {
    /// `tau = sqrt(2 log m)`, the detectability boundary scaling.
    Sqrt2LogM,
    Fixed(f64),
}

impl TauRule {
    pub fn tau2(&self, m: usize) -> f64 {
        match self {
            TauRule::Sqrt2LogM => 2.0 * (m as f64).ln(),
            TauRule::Fixed(tau) => tau * tau,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub m: usize,
    pub sigma: f64,
    pub tau_rule: TauRule,
    pub alpha: f64,
    pub beta_prior: f64,
    pub p_grid: Vec<f64>,
    pub procedures: Vec<Procedure>,
    pub sigma_known: bool,
    pub alt: AltKind,
    /// Replicates for everything except SB and DPP.
    pub reps: usize,
    pub sb_reps: usize,
    /// Replicate sweeps are not feasible for DPP at full scale; it only
    /// runs here when explicitly enabled, and by default belongs in
    /// [`toy_compare`].
    pub allow_dpp_sweeps: bool,
    pub dpp_reps: usize,
    pub sb_iter: usize,
    pub sb_burn: usize,
    pub dpp_iter: usize,
    pub dpp_burn: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses all available.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 200,
            sigma: 1.0,
            tau_rule: TauRule::Sqrt2LogM,
            alpha: 0.05,
            beta_prior: 22.76,
            p_grid: vec![0.0, 0.025, 0.05, 0.2, 0.5, 0.8],
            procedures: vec![
                Procedure::BayesOracle,
                Procedure::Sb,
                Procedure::Peb1,
                Procedure::Peb2,
                Procedure::Bh1,
                Procedure::Bh2,
                Procedure::Npbn,
            ],
            sigma_known: true,
            alt: AltKind::GaussianSignal,
            reps: 10_000,
            sb_reps: 3_000,
            allow_dpp_sweeps: false,
            dpp_reps: 100,
            sb_iter: 5000,
            sb_burn: 1000,
            dpp_iter: 4000,
            dpp_burn: 1000,
            master_seed: 0,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn tau2(&self) -> f64 {
        self.tau_rule.tau2(self.m)
    }

    pub fn params_at(&self, p: f64) -> Result<ModelParams> {
        ModelParams::new(p, self.sigma * self.sigma, self.tau2())
    }

    /// The default symmetrized-gamma alternative:
    /// shape 4, scale `2 sqrt(2 log m) / (4 sqrt(2 pi))`.
    pub fn default_gamma_alt(m: usize) -> AltKind {
        let shape = 4.0;
        let scale = 2.0 * (2.0 * (m as f64).ln()).sqrt()
            / (shape * (2.0 * std::f64::consts::PI).sqrt());
        AltKind::SymmetrizedGamma { shape, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig("sigma must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        if !(self.beta_prior > 1.0) {
            return Err(Error::InvalidConfig("beta_prior must be > 1".into()));
        }
        if self.reps == 0 || self.sb_reps == 0 {
            return Err(Error::InvalidConfig("replicate counts must be >= 1".into()));
        }
        if self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("p_grid values must lie in [0, 1]".into()));
        }
        if self.procedures.contains(&Procedure::Npbn) && !self.sigma_known {
            return Err(Error::InvalidConfig(
                "NPBN supports known sigma only; drop it or set sigma_known".into(),
            ));
        }
        if self.procedures.contains(&Procedure::Dpp) && !self.allow_dpp_sweeps {
            return Err(Error::InvalidConfig(
                "DPP replicate sweeps are disabled by default; use toy_compare or enable allow_dpp_sweeps"
                    .into(),
            ));
        }
        self.alt.validate()?;
        Ok(())
    }

    fn reps_for(&self, procedure: Procedure) -> usize {
        match procedure {
            Procedure::Sb => self.sb_reps,
            Procedure::Dpp => self.dpp_reps,
            _ => self.reps,
        }
    }

    /// Hash of the model-defining fields (not reps, seed, or workers);
    /// golden fixtures refuse to compare against a different model setup.
    pub fn model_config_hash(&self) -> String {
        let canonical = format!(
            "m={};sigma={};tau2={};alpha={};beta={};sigma_known={};alt={}",
            self.m,
            self.sigma,
            self.tau2(),
            self.alpha,
            self.beta_prior,
            self.sigma_known,
            self.alt.tag()
        );
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One emitted estimate, reproducible from `(config, seed)`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub procedure: String,
    pub p_true: f64,
    pub sigma_known: bool,
    pub alt: String,
    pub metric: String,
    pub estimate: f64,
    pub mc_se: f64,
    pub reps_used: usize,
    pub seed: u64,
    pub software_version: String,
}

fn sigma_known_opt(cfg: &ExperimentConfig) -> Option<f64> {
    cfg.sigma_known.then_some(cfg.sigma * cfg.sigma)
}

/// Decisions of one procedure on one dataset.
fn run_procedure_on(
    procedure: Procedure,
    data: &Dataset,
    params: &ModelParams,
    cfg: &ExperimentConfig,
    p_index: usize,
    replicate: u64,
) -> Result<crate::DecisionVector> {
    let xs = &data.x;
    let m = xs.len();
    let sigma = cfg.sigma;
    match procedure {
        Procedure::BayesOracle => oracle_decide(xs, params, &LossMatrix::ZERO_ONE),
        Procedure::Bonferroni => {
            let pv: Vec<f64> = xs.iter().map(|&x| two_sided_pvalue(x, sigma)).collect();
            Ok(bonferroni(&pv, cfg.alpha))
        }
        Procedure::Bh | Procedure::BhModified => {
            let pv: Vec<f64> = xs.iter().map(|&x| two_sided_pvalue(x, sigma)).collect();
            let m_eff = match procedure {
                Procedure::Bh => m as f64,
                _ => m as f64 * (1.0 - clamp_phat_for_m_eff(params.p, m)),
            };
            bh_step_up(&pv, &StepUpConfig::new(cfg.alpha, m_eff)?)
        }
        Procedure::Bh1 => {
            let est = profile_mle(xs, sigma_known_opt(cfg))?;
            bh_plugin_decide(xs, &est, cfg.alpha)
        }
        Procedure::Bh2 => {
            let est = penalized_mle(
                xs,
                &PriorP { beta: cfg.beta_prior },
                sigma_known_opt(cfg),
                VarianceFit::Moments,
            )?;
            bh_plugin_decide(xs, &est, cfg.alpha)
        }
        Procedure::Peb1 => {
            let est = profile_mle(xs, sigma_known_opt(cfg))?;
            Ok(peb_decide(xs, &est))
        }
        Procedure::Peb2 => {
            let est = penalized_mle(
                xs,
                &PriorP { beta: cfg.beta_prior },
                sigma_known_opt(cfg),
                VarianceFit::Moments,
            )?;
            Ok(peb_decide(xs, &est))
        }
        Procedure::Sb => {
            let sb_cfg = SbConfig {
                beta: cfg.beta_prior,
                n_iter: cfg.sb_iter,
                n_burn: cfg.sb_burn,
                sigma_known: sigma_known_opt(cfg),
                proposal_sd: 0.5,
            };
            let mut rng = derive_stream(cfg.master_seed, replicate, &format!("sb/p{p_index}"));
            Ok(sb_decide(&sb_run(xs, &sb_cfg, &mut rng)?))
        }
        Procedure::Dpp => {
            let dpp_cfg = DppConfig {
                beta: cfg.beta_prior,
                n_iter: cfg.dpp_iter,
                n_burn: cfg.dpp_burn,
                sigma_known: sigma_known_opt(cfg),
                ..DppConfig::default()
            };
            let mut rng = derive_stream(cfg.master_seed, replicate, &format!("dpp/p{p_index}"));
            Ok(dpp_decide(&dpp_run(xs, &dpp_cfg, &mut rng)?))
        }
        Procedure::Npbn => {
            let (_, decisions) = npbn_procedure(xs, sigma * sigma)?;
            Ok(decisions)
        }
    }
}

/// Per-replicate evaluation of the active procedures, sharing the dataset
/// and any common parameter estimates.
fn run_replicate(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    p_index: usize,
    replicate: u64,
    active: &[Procedure],
) -> Result<Vec<(Procedure, ConfusionCounts)>> {
    let mut rng = derive_stream(cfg.master_seed, replicate, &data_purpose(params.p, &cfg.alt.tag()));
    let data = sample_dataset(params, cfg.m, &cfg.alt, &mut rng)?;

    // shared estimates across the plug-in pairs
    let profile = if active.iter().any(|p| p.needs_profile_estimate()) {
        Some(profile_mle(&data.x, sigma_known_opt(cfg))?)
    } else {
        None
    };
    let penalized = if active.iter().any(|p| p.needs_penalized_estimate()) {
        Some(penalized_mle(
            &data.x,
            &PriorP { beta: cfg.beta_prior },
            sigma_known_opt(cfg),
            VarianceFit::Moments,
        )?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(active.len());
    for &procedure in active {
        let decisions = match procedure {
            Procedure::Peb1 => peb_decide(&data.x, profile.as_ref().unwrap()),
            Procedure::Bh1 => bh_plugin_decide(&data.x, profile.as_ref().unwrap(), cfg.alpha)?,
            Procedure::Peb2 => peb_decide(&data.x, penalized.as_ref().unwrap()),
            Procedure::Bh2 => bh_plugin_decide(&data.x, penalized.as_ref().unwrap(), cfg.alpha)?,
            _ => run_procedure_on(procedure, &data, params, cfg, p_index, replicate)?,
        };
        out.push((procedure, confusion(&decisions, &data.gamma)?));
    }
    Ok(out)
}

/// Metric estimates for one `(p, procedure)` cell.
pub struct CellResult {
    pub procedure: Procedure,
    pub p_true: f64,
    pub metrics: MetricEstimates,
}

fn rows_from_metrics(cfg: &ExperimentConfig, cell: &CellResult) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let base = |metric: &str, estimate: f64, mc_se: f64, reps_used: usize| ResultRow {
        procedure: cell.procedure.name().to_string(),
        p_true: cell.p_true,
        sigma_known: cfg.sigma_known,
        alt: cfg.alt.tag(),
        metric: metric.to_string(),
        estimate,
        mc_se,
        reps_used,
        seed: cfg.master_seed,
        software_version: SOFTWARE_VERSION.to_string(),
    };
    let m = &cell.metrics;
    rows.push(base("fdr", m.fdr.value, m.fdr.se, m.reps));
    rows.push(base("mp", m.mp.value, m.mp.se, m.reps));
    if let Some(p) = &m.pfdr {
        rows.push(base("pfdr", p.value, p.se, m.reps_with_rejection));
    }
    if let Some(p) = &m.power {
        rows.push(base("power", p.value, p.se, m.reps_with_signal));
    }
    if let Some(e) = &m.efficiency {
        rows.push(base("efficiency", e.value, e.se, m.reps));
    }
    rows
}

/// Run one `(p, procedures)` cell and return per-procedure metrics.
pub fn run_cell(
    cfg: &ExperimentConfig,
    p_index: usize,
    p: f64,
    procedures: &[Procedure],
) -> Result<Vec<CellResult>> {
    let params = cfg.params_at(p)?;
    let max_reps = procedures.iter().map(|&pr| cfg.reps_for(pr)).max().unwrap_or(0);

    let per_rep: Vec<Result<Vec<(Procedure, ConfusionCounts)>>> = (0..max_reps as u64)
        .into_par_iter()
        .map(|r| {
            let active: Vec<Procedure> = procedures
                .iter()
                .copied()
                .filter(|&pr| (r as usize) < cfg.reps_for(pr))
                .collect();
            run_replicate(cfg, &params, p_index, r, &active)
        })
        .collect();

    // sequential fold in replicate order keeps aggregation deterministic
    let mut per_proc: Vec<Vec<ConfusionCounts>> =
        procedures.iter().map(|&pr| Vec::with_capacity(cfg.reps_for(pr))).collect();
    for rep in per_rep {
        let rep = rep?;
        for (procedure, counts) in rep {
            let idx = procedures.iter().position(|&pr| pr == procedure).unwrap();
            per_proc[idx].push(counts);
        }
    }

    let omp = if matches!(cfg.alt, AltKind::GaussianSignal) {
        let v = oracle_mp(&params);
        (v > 0.0).then_some(v)
    } else {
        None // no closed-form oracle under the misspecified alternative
    };

    procedures
        .iter()
        .zip(per_proc)
        .map(|(&procedure, counts)| {
            Ok(CellResult { procedure, p_true: p, metrics: summarize(&counts, omp)? })
        })
        .collect()
}

fn with_worker_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run the full experiment grid. A hard error in any replicate aborts its
/// cell and is reported as a diagnostic row rather than dropped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    with_worker_pool(cfg.workers, || {
        let mut rows = Vec::new();
        for (p_index, &p) in cfg.p_grid.iter().enumerate() {
            match run_cell(cfg, p_index, p, &cfg.procedures) {
                Ok(cells) => {
                    for cell in &cells {
                        rows.extend(rows_from_metrics(cfg, cell));
                    }
                }
                Err(e) => {
                    rows.push(ResultRow {
                        procedure: "cell".to_string(),
                        p_true: p,
                        sigma_known: cfg.sigma_known,
                        alt: cfg.alt.tag(),
                        metric: format!("error: {e}"),
                        estimate: f64::NAN,
                        mc_se: f64::NAN,
                        reps_used: 0,
                        seed: cfg.master_seed,
                        software_version: SOFTWARE_VERSION.to_string(),
                    });
                }
            }
        }
        rows
    })
}

/// Closed-form rows for a fixed-threshold rule (the oracle and Bonferroni
/// have exact operating characteristics; no simulation involved).
pub fn analytic_threshold_rows(
    cfg: &ExperimentConfig,
    procedure: Procedure,
    p: f64,
) -> Result<Vec<ResultRow>> {
    let params = cfg.params_at(p)?;
    let threshold = match procedure {
        Procedure::BayesOracle => oracle_threshold(&params, &LossMatrix::ZERO_ONE),
        Procedure::Bonferroni => {
            cfg.sigma * norm_quantile(1.0 - cfg.alpha / (2.0 * cfg.m as f64))
        }
        _ => {
            return Err(Error::InvalidConfig(
                "closed forms exist only for the oracle and Bonferroni".into(),
            ))
        }
    };
    let rates = per_test_error_rates(&params, threshold);
    let mp = params.p * rates.t2 + (1.0 - params.p) * rates.t1;
    let base = |metric: &str, estimate: f64| ResultRow {
        procedure: procedure.name().to_string(),
        p_true: p,
        sigma_known: cfg.sigma_known,
        alt: cfg.alt.tag(),
        metric: metric.to_string(),
        estimate,
        mc_se: 0.0,
        reps_used: 0,
        seed: cfg.master_seed,
        software_version: SOFTWARE_VERSION.to_string(),
    };
    Ok(vec![
        base("fdr", fdr_of_threshold(&params, &rates, cfg.m)),
        base("bfdr", bfdr_of_threshold(&params, &rates)),
        base("mp", mp),
        base("power", 1.0 - rates.t2),
    ])
}

/// Figure panels the `fig` subcommand can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigPanel {
    Fig1a, // FDR of BO/Bonf/BH/BHmod vs p
    Fig1b, // BFDR (pFDR for the step-up rules)
    Fig1c, // power
    Fig1d, // MP
    Fig2a, // efficiency, sigma known
    Fig2b, // power, sigma known
    Fig2c, // efficiency, sigma unknown
    Fig2d, // power, sigma unknown
    Fig4a, // MP under the symmetrized-gamma alternative
    Fig4b, // FDR under the symmetrized-gamma alternative
    Fig5a, // wrong-model probability vs p, "all signal" confusion
    Fig5b, // wrong-model probability vs p, "all null" confusion
}

impl FigPanel {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "1a" => FigPanel::Fig1a,
            "1b" => FigPanel::Fig1b,
            "1c" => FigPanel::Fig1c,
            "1d" => FigPanel::Fig1d,
            "2a" => FigPanel::Fig2a,
            "2b" => FigPanel::Fig2b,
            "2c" => FigPanel::Fig2c,
            "2d" => FigPanel::Fig2d,
            "4a" => FigPanel::Fig4a,
            "4b" => FigPanel::Fig4b,
            "5a" => FigPanel::Fig5a,
            "5b" => FigPanel::Fig5b,
            other => return Err(Error::InvalidConfig(format!("unknown panel '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FigPanel::Fig1a => "1a",
            FigPanel::Fig1b => "1b",
            FigPanel::Fig1c => "1c",
            FigPanel::Fig1d => "1d",
            FigPanel::Fig2a => "2a",
            FigPanel::Fig2b => "2b",
            FigPanel::Fig2c => "2c",
            FigPanel::Fig2d => "2d",
            FigPanel::Fig4a => "4a",
            FigPanel::Fig4b => "4b",
            FigPanel::Fig5a => "5a",
            FigPanel::Fig5b => "5b",
        }
    }

    fn metric(&self) -> &'static str {
        match self {
            FigPanel::Fig1a | FigPanel::Fig4b => "fdr",
            FigPanel::Fig1b => "bfdr",
            FigPanel::Fig1c | FigPanel::Fig2b | FigPanel::Fig2d => "power",
            FigPanel::Fig1d | FigPanel::Fig4a => "mp",
            FigPanel::Fig2a | FigPanel::Fig2c => "efficiency",
            FigPanel::Fig5a | FigPanel::Fig5b => "wrong_model_prob",
        }
    }
}

/// Evenly spaced grid of `n` points over `[lo, hi]`.
pub fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Emit the data for one figure panel. For the frequentist panels the
/// oracle and Bonferroni curves are exact while the step-up rules are
/// simulated; panels 2 and 4 are plain experiment sweeps; panels 5a/5b
/// report the normal approximation and the direct simulation of the
/// wrong-model probability.
pub fn fig_panel_rows(
    panel: FigPanel,
    base_cfg: &ExperimentConfig,
    p_points: usize,
) -> Result<Vec<ResultRow>> {
    let metric = panel.metric();
    match panel {
        FigPanel::Fig1a | FigPanel::Fig1b | FigPanel::Fig1c | FigPanel::Fig1d => {
            let grid = even_grid(0.0, 0.5, p_points);
            let mut cfg = base_cfg.clone();
            cfg.sigma_known = true;
            cfg.alt = AltKind::GaussianSignal;
            cfg.p_grid = grid.clone();
            cfg.procedures = vec![Procedure::Bh, Procedure::BhModified];
            let mut rows: Vec<ResultRow> = run_experiment(&cfg)?
                .into_iter()
                .filter(|r| r.metric == metric || (metric == "bfdr" && r.metric == "pfdr"))
                .collect();
            for &p in &grid {
                for procedure in [Procedure::BayesOracle, Procedure::Bonferroni] {
                    rows.extend(
                        analytic_threshold_rows(&cfg, procedure, p)?
                            .into_iter()
                            .filter(|r| r.metric == metric),
                    );
                }
            }
            Ok(rows)
        }
        FigPanel::Fig2a | FigPanel::Fig2b | FigPanel::Fig2c | FigPanel::Fig2d => {
            let sigma_known = matches!(panel, FigPanel::Fig2a | FigPanel::Fig2b);
            let efficiency_panel = matches!(panel, FigPanel::Fig2a | FigPanel::Fig2c);
            let grid = if efficiency_panel {
                even_grid(0.005, 0.2, p_points)
            } else {
                even_grid(0.01, 0.95, p_points)
            };
            let mut cfg = base_cfg.clone();
            cfg.sigma_known = sigma_known;
            cfg.alt = AltKind::GaussianSignal;
            cfg.p_grid = grid;
            cfg.procedures = vec![
                Procedure::Sb,
                Procedure::Peb1,
                Procedure::Peb2,
                Procedure::Bh1,
                Procedure::Bh2,
            ];
            if sigma_known {
                cfg.procedures.push(Procedure::Npbn);
            }
            Ok(run_experiment(&cfg)?.into_iter().filter(|r| r.metric == metric).collect())
        }
        FigPanel::Fig4a | FigPanel::Fig4b => {
            let mut cfg = base_cfg.clone();
            cfg.sigma_known = true;
            cfg.alt = ExperimentConfig::default_gamma_alt(cfg.m);
            cfg.p_grid = even_grid(0.01, 0.95, p_points);
            cfg.procedures = vec![
                Procedure::Peb1,
                Procedure::Peb2,
                Procedure::Bh1,
                Procedure::Bh2,
                Procedure::Npbn,
            ];
            Ok(run_experiment(&cfg)?.into_iter().filter(|r| r.metric == metric).collect())
        }
        FigPanel::Fig5a | FigPanel::Fig5b => {
            let grid = even_grid(0.01, 0.99, p_points);
            let mut rows = Vec::new();
            let n_mc = 200_000usize;
            let direct_reps = 4000usize;
            for (i, &p) in grid.iter().enumerate() {
                let m1 = base_cfg.params_at(p)?;
                let m2 = if matches!(panel, FigPanel::Fig5a) {
                    crate::identify::variance_matched_full(&m1)?
                } else {
                    crate::identify::variance_matched_null(&m1)?
                };
                let mut rng = derive_stream(base_cfg.master_seed, i as u64, "fig5/kl");
                let stats = crate::identify::kl_mc(&m1, &m2, n_mc, &mut rng)?;
                let approx = crate::identify::wrong_model_prob(&stats, base_cfg.m)
                    .unwrap_or(if stats.k12 >= 0.0 { 0.0 } else { 1.0 });
                let mut rng = derive_stream(base_cfg.master_seed, i as u64, "fig5/direct");
                let direct = crate::identify::wrong_model_prob_direct(
                    &m1,
                    &m2,
                    base_cfg.m,
                    direct_reps,
                    &mut rng,
                )?;
                let base = |metric: &str, estimate: f64, mc_se: f64, reps: usize| ResultRow {
                    procedure: if matches!(panel, FigPanel::Fig5a) { "M2-full" } else { "M2-null" }
                        .to_string(),
                    p_true: p,
                    sigma_known: base_cfg.sigma_known,
                    alt: "gaussian".to_string(),
                    metric: metric.to_string(),
                    estimate,
                    mc_se,
                    reps_used: reps,
                    seed: base_cfg.master_seed,
                    software_version: SOFTWARE_VERSION.to_string(),
                };
                rows.push(base("wrong_model_prob", approx, 0.0, n_mc));
                rows.push(base(
                    "wrong_model_prob_direct",
                    direct,
                    (direct * (1.0 - direct) / direct_reps as f64).sqrt(),
                    direct_reps,
                ));
            }
            Ok(rows)
        }
    }
}

/// Toy-dataset comparison of the sampler-based procedures.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub m: usize,
    pub sigma: f64,
    pub tau_rule: TauRule,
    pub beta_prior: f64,
    /// Signal fraction of each generated dataset.
    pub p_list: Vec<f64>,
    pub procedures: Vec<Procedure>,
    pub sigma_known: bool,
    pub sb_iter: usize,
    pub sb_burn: usize,
    pub dpp_iter: usize,
    pub dpp_burn: usize,
    pub master_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            m: 200,
            sigma: 1.0,
            tau_rule: TauRule::Sqrt2LogM,
            beta_prior: 22.76,
            // realized signal fractions spanning sparse to dense
            p_list: vec![0.015, 0.025, 0.07, 0.06, 0.095, 0.15, 0.485, 0.5, 0.82, 0.73],
            procedures: vec![Procedure::Sb, Procedure::Dpp, Procedure::Npbn],
            sigma_known: true,
            sb_iter: 5000,
            sb_burn: 1000,
            dpp_iter: 4000,
            dpp_burn: 1000,
            master_seed: 0,
        }
    }
}

/// One (dataset, procedure) outcome: counts of correct and false
/// discoveries.
#[derive(Debug, Clone, Serialize)]
pub struct ToyRow {
    pub dataset_id: usize,
    pub p_true: f64,
    pub n_signals: usize,
    pub procedure: String,
    pub correct: usize,
    pub false_discoveries: usize,
}

/// Per-observation posterior scatter point.
#[derive(Debug, Clone, Serialize)]
pub struct ScatterRow {
    pub dataset_id: usize,
    pub procedure: String,
    pub x: f64,
    pub prob_null: f64,
    pub is_signal: bool,
}

#[derive(Debug, Clone)]
pub struct ToyReport {
    pub rows: Vec<ToyRow>,
    pub scatter: Vec<ScatterRow>,
}

/// Generate toy datasets and report discovery counts plus posterior
/// null-probability scatter data for each sampler.
pub fn toy_compare(cfg: &ToyConfig) -> Result<ToyReport> {
    for pr in &cfg.procedures {
        if !matches!(pr, Procedure::Sb | Procedure::Dpp | Procedure::Npbn) {
            return Err(Error::InvalidConfig(format!(
                "toy_compare supports SB, DPP and NPBN; got {}",
                pr.name()
            )));
        }
    }
    if cfg.procedures.contains(&Procedure::Npbn) && !cfg.sigma_known {
        return Err(Error::InvalidConfig("NPBN supports known sigma only".into()));
    }
    let sigma2 = cfg.sigma * cfg.sigma;
    let tau2 = cfg.tau_rule.tau2(cfg.m);
    let sigma_known = cfg.sigma_known.then_some(sigma2);

    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    for (id, &p) in cfg.p_list.iter().enumerate() {
        let params = ModelParams::new(p, sigma2, tau2)?;
        let mut rng = derive_stream(cfg.master_seed, id as u64, &data_purpose(p, "toy"));
        let data = sample_dataset(&params, cfg.m, &AltKind::GaussianSignal, &mut rng)?;
        let n_signals = data.n_signals();

        for &procedure in &cfg.procedures {
            let prob_null: Vec<f64> = match procedure {
                Procedure::Sb => {
                    let sb_cfg = SbConfig {
                        beta: cfg.beta_prior,
                        n_iter: cfg.sb_iter,
                        n_burn: cfg.sb_burn,
                        sigma_known,
                        proposal_sd: 0.5,
                    };
                    let mut rng = derive_stream(cfg.master_seed, id as u64, "toy/sb");
                    sb_run(&data.x, &sb_cfg, &mut rng)?.prob_null
                }
                Procedure::Dpp => {
                    let dpp_cfg = DppConfig {
                        beta: cfg.beta_prior,
                        n_iter: cfg.dpp_iter,
                        n_burn: cfg.dpp_burn,
                        sigma_known,
                        ..DppConfig::default()
                    };
                    let mut rng = derive_stream(cfg.master_seed, id as u64, "toy/dpp");
                    dpp_run(&data.x, &dpp_cfg, &mut rng)?.prob_null
                }
                Procedure::Npbn => {
                    let (est, _) = npbn_procedure(&data.x, sigma2)?;
                    data.x.iter().map(|&x| npbn_prob_null(x, &est, sigma2)).collect()
                }
                _ => unreachable!(),
            };
            let decisions = crate::DecisionVector {
                reject: prob_null.iter().map(|&q| q < 0.5).collect(),
            };
            let counts = confusion(&decisions, &data.gamma)?;
            rows.push(ToyRow {
                dataset_id: id,
                p_true: p,
                n_signals,
                procedure: procedure.name().to_string(),
                correct: counts.s,
                false_discoveries: counts.v,
            });
            for i in 0..cfg.m {
                scatter.push(ScatterRow {
                    dataset_id: id,
                    procedure: procedure.name().to_string(),
                    x: data.x[i],
                    prob_null: prob_null[i],
                    is_signal: data.gamma[i],
                });
            }
        }
    }
    Ok(ToyReport { rows, scatter })
}

/// Serialize rows to CSV text.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write text to `path` atomically (write to a sibling temp file, rename).
pub fn write_atomic(path: &std::path::Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Flat key=value manifest describing a run.
pub fn manifest_text(cfg: &ExperimentConfig) -> String {
    let procedures: Vec<&str> = cfg.procedures.iter().map(|p| p.name()).collect();
    format!(
        "software_version={}\nmodel_config_hash={}\nm={}\nsigma={}\ntau2={}\nalpha={}\nbeta_prior={}\nsigma_known={}\nalt={}\np_grid={}\nprocedures={}\nreps={}\nsb_reps={}\ndpp_reps={}\nsb_iter={}\nsb_burn={}\ndpp_iter={}\ndpp_burn={}\nmaster_seed={}\nworkers={}\n",
        SOFTWARE_VERSION,
        cfg.model_config_hash(),
        cfg.m,
        cfg.sigma,
        cfg.tau2(),
        cfg.alpha,
        cfg.beta_prior,
        cfg.sigma_known,
        cfg.alt.tag(),
        cfg.p_grid.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        procedures.join(","),
        cfg.reps,
        cfg.sb_reps,
        cfg.dpp_reps,
        cfg.sb_iter,
        cfg.sb_burn,
        cfg.dpp_iter,
        cfg.dpp_burn,
        cfg.master_seed,
        cfg.workers,
    )
}

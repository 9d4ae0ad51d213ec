//! Command-line simulation laboratory for multiple-testing operating
//! characteristics under the two-groups Gaussian mixture model.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mixtest::fixtures::{table3_config, table3_fixtures, verify_fixtures};
use mixtest::harness::{
    fig_panel_rows, manifest_text, rows_to_csv, run_experiment, toy_compare, write_atomic,
    ExperimentConfig, FigPanel, Procedure, TauRule, ToyConfig,
};
use mixtest::identify::{
    kl_mc, variance_matched_full, variance_matched_null, wrong_model_prob, wrong_model_prob_direct,
};
use mixtest::model::{AltKind, ModelParams};
use mixtest::selftest::{checks_to_csv, run_selftest};
use mixtest::stream::derive_stream;

#[derive(Parser)]
#[command(
    name = "mixtest",
    about = "Monte Carlo laboratory for multiple-testing procedures under a two-groups Gaussian mixture",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Master seed; all results are bit-reproducible from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for CSV artifacts (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Clone)]
struct ModelOpts {
    /// Number of simultaneous tests.
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Null standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Signal standard deviation; default sqrt(2 log m).
    #[arg(long)]
    tau: Option<f64>,
    /// Step-up level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Shape of the Beta(1, beta) prior on the signal fraction.
    #[arg(long, default_value_t = 22.76)]
    beta_prior: f64,
    /// Treat sigma as unknown (estimated / sampled by each procedure).
    #[arg(long)]
    sigma_unknown: bool,
    /// Draw signal effects from the symmetrized gamma alternative instead
    /// of the Gaussian one.
    #[arg(long)]
    alt_gamma: bool,
}

impl ModelOpts {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.m = self.m;
        cfg.sigma = self.sigma;
        cfg.tau_rule = match self.tau {
            Some(t) => TauRule::Fixed(t),
            None => TauRule::Sqrt2LogM,
        };
        cfg.alpha = self.alpha;
        cfg.beta_prior = self.beta_prior;
        cfg.sigma_known = !self.sigma_unknown;
        cfg.alt = if self.alt_gamma {
            ExperimentConfig::default_gamma_alt(self.m)
        } else {
            AltKind::GaussianSignal
        };
    }
}

#[derive(Subcommand)]
enum Command {
    /// General experiment sweep over a p-grid and a procedure list.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        model: ModelOpts,
        /// Comma-separated signal fractions.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.025, 0.05, 0.2, 0.5, 0.8])]
        p: Vec<f64>,
        /// Comma-separated procedures (BO, Bonf, BH, BHmod, BH1, BH2,
        /// PEB1, PEB2, SB, NPBN; DPP needs --allow-dpp).
        #[arg(long, value_delimiter = ',', default_value = "BO,PEB2,BH2,NPBN")]
        procedures: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 3000)]
        sb_reps: usize,
        /// Opt in to DPP replicate sweeps (expensive; toy-compare is the
        /// intended home for DPP).
        #[arg(long)]
        allow_dpp: bool,
        #[arg(long, default_value_t = 100)]
        dpp_reps: usize,
    },
    /// Reproduce the main operating-characteristics table.
    Table3 {
        #[command(flatten)]
        common: CommonOpts,
        /// Sigma treated as unknown (the table's right half).
        #[arg(long)]
        sigma_unknown: bool,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 3000)]
        sb_reps: usize,
        /// Reconcile results against the bundled reference fixtures and
        /// write reconciliation.csv; exits nonzero on flagged cells.
        #[arg(long)]
        verify: bool,
    },
    /// Emit the data behind one figure panel.
    Fig {
        #[command(flatten)]
        common: CommonOpts,
        /// Panel: 1a 1b 1c 1d 2a 2b 2c 2d 4a 4b 5a 5b.
        #[arg(long)]
        panel: String,
        /// Number of p-grid points.
        #[arg(long, default_value_t = 40)]
        p_points: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 3000)]
        sb_reps: usize,
    },
    /// Case-by-case comparison of the sampler-based procedures on toy
    /// datasets, with posterior scatter data.
    ToyCompare {
        #[command(flatten)]
        common: CommonOpts,
        /// Signal fraction of each generated dataset.
        #[arg(long, value_delimiter = ',')]
        p_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "SB,DPP,NPBN")]
        procedures: Vec<String>,
        #[arg(long)]
        sigma_unknown: bool,
        #[arg(long, default_value_t = 200)]
        m: usize,
    },
    /// Kullback-Leibler identifiability diagnostics for the two
    /// variance-matched confusion pairs.
    Identify {
        #[command(flatten)]
        common: CommonOpts,
        /// Monte Carlo draws for the divergence moments.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        /// Replicates for the direct wrong-model probability.
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
    },
    /// Run the acceptance suite and write a reconciliation report;
    /// exits nonzero if any criterion fails.
    Selftest {
        #[command(flatten)]
        common: CommonOpts,
        /// Include the slow criteria (6 and 10b).
        #[arg(long)]
        slow: bool,
        /// Cut replicate counts for a smoke run (tolerances unchanged;
        /// not the acceptance gate).
        #[arg(long)]
        quick: bool,
    },
}

fn parse_procedures(names: &[String]) -> Result<Vec<Procedure>> {
    names.iter().map(|n| Procedure::parse(n).map_err(Into::into)).collect()
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_run(dir: &Path, cfg: &ExperimentConfig, stem: &str) -> Result<()> {
    ensure_out(dir)?;
    let rows = run_experiment(cfg)?;
    let csv = rows_to_csv(&rows)?;
    write_atomic(&dir.join(format!("{stem}.csv")), &csv)?;
    write_atomic(&dir.join(format!("{stem}.manifest.txt")), &manifest_text(cfg))?;
    println!("wrote {}/{stem}.csv ({} rows)", dir.display(), rows.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            common,
            model,
            p,
            procedures,
            reps,
            sb_reps,
            allow_dpp,
            dpp_reps,
        } => {
            let mut cfg = ExperimentConfig {
                master_seed: common.seed,
                workers: common.workers,
                reps,
                sb_reps,
                allow_dpp_sweeps: allow_dpp,
                dpp_reps,
                p_grid: p,
                procedures: parse_procedures(&procedures)?,
                ..ExperimentConfig::default()
            };
            model.apply(&mut cfg);
            write_run(&common.out, &cfg, "results")
        }
        Command::Table3 { common, sigma_unknown, reps, sb_reps, verify } => {
            let mut cfg = table3_config(!sigma_unknown);
            cfg.master_seed = common.seed;
            cfg.workers = common.workers;
            cfg.reps = reps;
            cfg.sb_reps = sb_reps;
            ensure_out(&common.out)?;
            let rows = run_experiment(&cfg)?;
            let stem = if sigma_unknown { "table3_sigma_unknown" } else { "table3_sigma_known" };
            write_atomic(&common.out.join(format!("{stem}.csv")), &rows_to_csv(&rows)?)?;
            write_atomic(&common.out.join(format!("{stem}.manifest.txt")), &manifest_text(&cfg))?;
            println!("wrote {}/{stem}.csv ({} rows)", common.out.display(), rows.len());
            if verify {
                let fixtures = table3_fixtures(!sigma_unknown);
                let report = verify_fixtures(&rows, &fixtures, &cfg.model_config_hash())?;
                write_atomic(&common.out.join("reconciliation.csv"), &report.to_csv()?)?;
                println!(
                    "reconciliation: {} fixtures, {} flagged ({} reference-valued)",
                    report.rows.len(),
                    report.n_flagged(),
                    report.n_flagged_reference()
                );
                for r in report.rows.iter().filter(|r| !r.pass) {
                    println!(
                        "  FLAGGED {}: estimate {:.4} vs expected {:.4} (tol {:.4}, mc_se {:.4})",
                        r.fixture_id, r.estimate, r.expected, r.tolerance, r.mc_se
                    );
                }
                if report.n_flagged() > 0 {
                    bail!("{} fixture(s) flagged", report.n_flagged());
                }
            }
            Ok(())
        }
        Command::Fig { common, panel, p_points, reps, sb_reps } => {
            let panel = FigPanel::parse(&panel)?;
            let cfg = ExperimentConfig {
                master_seed: common.seed,
                workers: common.workers,
                reps,
                sb_reps,
                ..ExperimentConfig::default()
            };
            ensure_out(&common.out)?;
            let rows = fig_panel_rows(panel, &cfg, p_points)?;
            let stem = format!("fig{}", panel.name());
            write_atomic(&common.out.join(format!("{stem}.csv")), &rows_to_csv(&rows)?)?;
            println!("wrote {}/{stem}.csv ({} rows)", common.out.display(), rows.len());
            Ok(())
        }
        Command::ToyCompare { common, p_list, procedures, sigma_unknown, m } => {
            let mut cfg = ToyConfig {
                master_seed: common.seed,
                procedures: parse_procedures(&procedures)?,
                sigma_known: !sigma_unknown,
                m,
                ..ToyConfig::default()
            };
            if let Some(p_list) = p_list {
                cfg.p_list = p_list;
            }
            ensure_out(&common.out)?;
            let report = toy_compare(&cfg)?;
            write_atomic(&common.out.join("toy_compare.csv"), &rows_to_csv(&report.rows)?)?;
            write_atomic(&common.out.join("toy_scatter.csv"), &rows_to_csv(&report.scatter)?)?;
            println!("dataset  p_true  signals  procedure  correct  false");
            for r in &report.rows {
                println!(
                    "{:>7}  {:>6}  {:>7}  {:>9}  {:>7}  {:>5}",
                    r.dataset_id, r.p_true, r.n_signals, r.procedure, r.correct, r.false_discoveries
                );
            }
            Ok(())
        }
        Command::Identify { common, n, reps } => {
            ensure_out(&common.out)?;
            let tau2 = 2.0 * 200.0f64.ln();
            let mut lines = String::from("pair,k12,se_k12,v12,se_v12,p_wrong_normal,p_wrong_direct\n");
            for (tag, p) in [("M2-full", 0.01), ("M2-null", 0.95)] {
                let m1 = ModelParams::new(p, 1.0, tau2)?;
                let m2 = if tag == "M2-full" {
                    variance_matched_full(&m1)?
                } else {
                    variance_matched_null(&m1)?
                };
                let mut rng = derive_stream(common.seed, 0, &format!("identify/kl/{tag}"));
                let stats = kl_mc(&m1, &m2, n, &mut rng)?;
                let approx = wrong_model_prob(&stats, 200)?;
                let mut rng = derive_stream(common.seed, 0, &format!("identify/direct/{tag}"));
                let direct = wrong_model_prob_direct(&m1, &m2, 200, reps, &mut rng)?;
                println!(
                    "{tag}: K12 = {:.6} (se {:.1e}), V12 = {:.6} (se {:.1e}), P(D12<0) normal = {:.4}, direct = {:.4}",
                    stats.k12, stats.se_k12, stats.v12, stats.se_v12, approx, direct
                );
                lines.push_str(&format!(
                    "{tag},{},{},{},{},{},{}\n",
                    stats.k12, stats.se_k12, stats.v12, stats.se_v12, approx, direct
                ));
            }
            write_atomic(&common.out.join("identify.csv"), &lines)?;
            Ok(())
        }
        Command::Selftest { common, slow, quick } => {
            ensure_out(&common.out)?;
            let results = run_selftest(common.seed, slow, quick)?;
            let mut any_failed = false;
            for criterion in &results {
                println!("{}", criterion.summary_line());
                for check in &criterion.checks {
                    println!("{}", check.line());
                }
                any_failed |= !criterion.passed();
            }
            write_atomic(&common.out.join("reconciliation.csv"), &checks_to_csv(&results)?)?;
            if any_failed {
                bail!("selftest: at least one criterion failed (see reconciliation.csv)");
            }
            println!("selftest: all criteria passed");
            Ok(())
        }
    }
}

//! Experiment runner behind the `batchloss` binary.
//!
//! Every mode produces its whole output in memory; the single write happens
//! at the end of [`run`].

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io;

use serde::Serialize;
use thiserror::Error;

pub use config::{
    parse_config, ConfigError, ExperimentConfig, Mode, OutputFormat, OutputSpec, DEFAULT_ALPHA,
    DEFAULT_CYCLES, DEFAULT_LEVEL, DEFAULT_SAMPLES,
};

use crate::dists::{empirical_mrl_check, GridStatus, Sampler};
use crate::engine::{QueueModel, SimError, Simulator};
use crate::oracle::{solve, LatticeModel, OracleError};
use crate::report::{write_csv, CsvRow, EstimateReport};
use crate::rng::stream;
use crate::stats::{
    check_theorem_conditions, test_lemma_inequality, test_theorem_equality, LemmaVerdict,
    StatsError, TheoremVerdict,
};

/// Agreement required between the oracle and `E X_1` when the theorem applies.
pub const ORACLE_EQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("estimation failed: {0}")]
    Stats(#[from] StatsError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("classify-dist: {0}")]
    Dist(#[from] crate::dists::DistError),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// True when every verdict of the mode passed.
    pub passed: bool,
    /// The rendered CSV or report.
    pub output: String,
    /// Whether `output` was written to the configured path.
    pub written: bool,
}

/// One row of the `oracle` mode output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub lambda: f64,
    pub b: f64,
    pub d: f64,
    #[serde(rename = "K")]
    pub levels: usize,
    pub n: f64,
    pub policy: String,
    pub ex1: f64,
    pub ad_over_b: f64,
    pub oracle_ml: f64,
    pub truncation: f64,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MrlRow {
    family: String,
    class: String,
    x: f64,
    mrl_exact: Option<f64>,
    mrl_empirical: f64,
    mrl_se: f64,
    exceedances: usize,
    status: String,
}

fn csv_string<S: Serialize>(rows: &[S]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn simulate_point(
    config: &ExperimentConfig,
    model: &QueueModel<f64>,
) -> Result<EstimateReport<f64>, CliError> {
    log::info!(
        "simulating n = {} ({} cycles)",
        model.capacity,
        config.num_cycles
    );
    let records = Simulator::new(model.clone())?.run_cycles(
        config.num_cycles,
        config.seed,
        config.workers,
    )?;
    let report = EstimateReport::new(&records, model, config.level, config.seed)?;
    Ok(match config.mode {
        Mode::VerifyTheorem => {
            let v = test_theorem_equality(&records, model.mean_arrival_batch(), config.level)?;
            report.with_theorem(v)
        }
        Mode::VerifyLemma => {
            let v = test_lemma_inequality(&records, model, config.alpha)?;
            report.with_lemma(v)
        }
        _ => report,
    })
}

fn render_reports(
    config: &ExperimentConfig,
    reports: &[EstimateReport<f64>],
    passed: bool,
) -> Result<String, CliError> {
    match config.output.format {
        OutputFormat::Csv => {
            let rows: Vec<CsvRow> = reports.iter().map(|r| r.csv_row()).collect();
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows)?;
            Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
        }
        OutputFormat::Report => {
            let mut out = String::new();
            for r in reports {
                out.push_str(&r.render());
                out.push('\n');
            }
            if matches!(config.mode, Mode::VerifyTheorem | Mode::VerifyLemma) {
                let _ = writeln!(
                    out,
                    "{}: {}",
                    config.mode,
                    if passed { "PASS" } else { "FAIL" }
                );
            }
            Ok(out)
        }
    }
}

fn run_estimates(config: &ExperimentConfig) -> Result<(bool, String), CliError> {
    let reports = config
        .sweep_models()?
        .iter()
        .map(|m| simulate_point(config, m))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| match config.mode {
        Mode::VerifyTheorem => r.theorem == Some(TheoremVerdict::Consistent),
        Mode::VerifyLemma => r.lemma == Some(LemmaVerdict::StrictlyGreater),
        _ => true,
    });
    Ok((passed, render_reports(config, &reports, passed)?))
}

/// Oracle rows for every sweep capacity.
pub fn oracle_rows(config: &ExperimentConfig) -> Result<Vec<OracleRow>, CliError> {
    let theorem_holds = check_theorem_conditions(config.require_model()?).is_ok();
    config
        .sweep_models()?
        .iter()
        .map(|model| {
            let lattice = LatticeModel::from_queue_model(model)?;
            let sol = solve(&lattice)?;
            let ex1 = lattice.mean_batch_mass();
            let verdict = if !theorem_holds {
                "n/a".to_string()
            } else if (sol.expected_loss - ex1).abs() <= ORACLE_EQUALITY_TOL {
                TheoremVerdict::Consistent.to_string()
            } else if sol.expected_loss > ex1 {
                TheoremVerdict::ViolatedHigh.to_string()
            } else {
                TheoremVerdict::ViolatedLow.to_string()
            };
            Ok(OracleRow {
                lambda: lattice.arrival_rate,
                b: lattice.service_time,
                d: lattice.span,
                levels: lattice.levels,
                n: model.capacity,
                policy: model.policy.to_string(),
                ex1,
                ad_over_b: lattice.balance_mean(),
                oracle_ml: sol.expected_loss,
                truncation: sol.truncated_mass,
                verdict,
            })
        })
        .collect()
}

fn run_oracle(config: &ExperimentConfig) -> Result<(bool, String), CliError> {
    let rows = oracle_rows(config)?;
    let passed = rows
        .iter()
        .all(|r| r.verdict == "n/a" || r.verdict == "consistent");
    let out = match config.output.format {
        OutputFormat::Csv => csv_string(&rows)?,
        OutputFormat::Report => {
            let mut out = String::new();
            for r in &rows {
                let _ = writeln!(
                    out,
                    "lambda = {}  b = {}  d = {}  n = {}  K = {}  policy = {}\n  E X_1 = {}  a*d/b = {}  exact E M_L = {:.12}  truncated Poisson mass = {:.3e}  verdict: {}",
                    r.lambda, r.b, r.d, r.n, r.levels, r.policy, r.ex1, r.ad_over_b, r.oracle_ml, r.truncation, r.verdict
                );
            }
            out
        }
    };
    Ok((passed, out))
}

fn run_classify(config: &ExperimentConfig) -> Result<(bool, String), CliError> {
    let spec = config.distribution.clone().ok_or(ConfigError::Missing {
        field: "distribution",
        mode: config.mode,
    })?;
    let class = spec.classify_aging();
    let mean = spec.mean();
    let grid = config
        .grid
        .clone()
        .unwrap_or_else(|| (0..=10).map(|q| q as f64 * 0.5 * mean).collect());
    let sampler = Sampler::new(spec.clone())?;
    let mut rng = stream(config.seed, 0);
    let draws: Vec<f64> = (0..config.samples)
        .map(|_| sampler.sample(&mut rng))
        .collect();
    let empirical = empirical_mrl_check(&draws, &grid)?;
    let passed = empirical.consistent_with(class);
    let rows: Vec<MrlRow> = empirical
        .points
        .iter()
        .map(|p| MrlRow {
            family: spec.family().to_string(),
            class: class.to_string(),
            x: p.x,
            mrl_exact: spec.mean_residual_life(p.x).ok(),
            mrl_empirical: p.mrl,
            mrl_se: p.std_error,
            exceedances: p.exceedances,
            status: match p.status {
                GridStatus::Conclusive => "conclusive".into(),
                GridStatus::Inconclusive => "inconclusive".into(),
            },
        })
        .collect();
    let out = match config.output.format {
        OutputFormat::Csv => csv_string(&rows)?,
        OutputFormat::Report => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "family = {}  mean = {}  aging class = {}",
                spec.family(),
                mean,
                class
            );
            let _ = writeln!(
                out,
                "  sample mean = {:.6} (se {:.3e}, {} samples)",
                empirical.sample_mean,
                empirical.sample_mean_se,
                draws.len()
            );
            for r in &rows {
                let exact = r
                    .mrl_exact
                    .map_or("outside support".to_string(), |v| format!("{v:.6}"));
                let _ = writeln!(
                    out,
                    "  x = {:<10} mrl exact = {:<16} empirical = {:.6} (se {:.3e}) {}",
                    r.x, exact, r.mrl_empirical, r.mrl_se, r.status
                );
            }
            let _ = writeln!(
                out,
                "  empirical NBUE-consistent: {}  NWUE-consistent: {}",
                empirical.nbue_consistent, empirical.nwue_consistent
            );
            out
        }
    };
    Ok((passed, out))
}

/// Executes the configured mode and writes its output once.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate_for_mode()?;
    let (passed, output) = match config.mode {
        Mode::Simulate | Mode::VerifyTheorem | Mode::VerifyLemma => run_estimates(config)?,
        Mode::Oracle => run_oracle(config)?,
        Mode::ClassifyDist => run_classify(config)?,
    };
    let written = match &config.output.path {
        Some(path) => {
            fs::write(path, &output)?;
            true
        }
        None => false,
    };
    Ok(RunOutcome {
        passed,
        output,
        written,
    })
}

/// Event trace of the first `cycles` cycles of stream 0, one line per event.
pub fn trace(config: &ExperimentConfig, cycles: usize) -> Result<String, CliError> {
    let model = config.require_model()?;
    let sim = Simulator::new(model.clone())?;
    let mut rng = stream(config.seed, 0);
    let mut out = String::from("time\tevent\tmass_before\tmass_after\tlost\n");
    for _ in 0..cycles {
        sim.simulate_cycle_observed(&mut rng, |e| {
            let _ = writeln!(out, "{e}");
        })?;
    }
    Ok(out)
}

//! Configuration-driven front end to `fracflow`: kernel tables, clock
//! sampling, solves and the verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 solver non-convergence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod verify;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use fracflow::caputo::TimeSeries;
use fracflow::measures::io::{write_atomic, write_json_atomic, write_path_csv, Manifest};
use fracflow::measures::MeasurePath;
use fracflow::specfun::{inverse_subordinator_density, mittag_leffler, subordinator_density, FracOrder};
use fracflow::subordinator::{sample_inverse_paths, Estimate, RngSpec};
use fracflow::transport::{
    solve_linear, solve_linear_mc, solve_nonlinear_logged, solve_with_source, PicardLog, PicardSweep, SolverConfig,
};

use config::{KernelsConfig, Problem, RunConfig, SampleConfig, VerifyConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verification(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::NonConvergence(_) => 3,
        }
    }
}

impl From<fracflow::Error> for CliError {
    fn from(e: fracflow::Error) -> Self {
        use fracflow::Error as E;
        match e {
            E::NonConvergence { .. } => Self::NonConvergence(e.to_string()),
            E::Io(_) | E::Csv(_) | E::Json(_) => Self::Io(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

fn order(beta: f64) -> Result<FracOrder, CliError> {
    let b = FracOrder::new(beta)?;
    if b.is_classical() {
        return Err(CliError::Config("kernel tables need beta < 1".into()));
    }
    Ok(b)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Writes `kernels.csv` (`beta, s, t, g, h`) and `mittag_leffler.csv` (`beta, z, value`).
pub fn cmd_kernels(config: &KernelsConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if config.betas.is_empty() || config.s.iter().any(|s| !(*s >= 0.0)) || config.t.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Config("need betas, s >= 0 and t > 0".into()));
    }
    let mut rows = Vec::new();
    let mut ml = Vec::new();
    for &beta in &config.betas {
        let b = order(beta)?;
        for &t in &config.t {
            for &s in &config.s {
                let g = if s == 0.0 { 0.0 } else { subordinator_density(b, s, t)? };
                rows.push(vec![beta, s, t, g, inverse_subordinator_density(b, s, t)?]);
            }
        }
        for &z in &config.z {
            ml.push(vec![beta, z, mittag_leffler(b, z)?]);
        }
    }
    let files = [out.join("kernels.csv"), out.join("mittag_leffler.csv")];
    write_atomic(&files[0], &csv_bytes(&["beta", "s", "t", "g", "h"], rows)?)?;
    write_atomic(&files[1], &csv_bytes(&["beta", "z", "value"], ml)?)?;
    Ok(files.to_vec())
}

/// One Monte Carlo estimate of `E[E_t^γ]` or `E[e^{λE_t}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub beta: f64,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// Writes `samples.jsonl`; one clock sample per `β`, shared by every `t`, `γ` and `λ`.
pub fn cmd_sample(config: &SampleConfig, out: &Path) -> Result<Vec<SampleRecord>, CliError> {
    if config.n < 2 || config.times.is_empty() || config.times.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::Config("need n >= 2 and nonnegative times".into()));
    }
    if config.gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(CliError::Config("moment orders must be positive".into()));
    }
    let mut sorted = config.times.clone();
    sorted.sort_by(f64::total_cmp);
    let spec = RngSpec::new(config.seed);
    let mut records = Vec::new();
    for (i, &beta) in config.betas.iter().enumerate() {
        let s = sample_inverse_paths(FracOrder::new(beta)?, &sorted, config.n, config.dtau, spec.derive(i as u64))?;
        for &t in &config.times {
            let col = s.column(sorted.iter().position(|x| *x == t).expect("t is in the sorted copy"));
            let mut push = |gamma, lambda, f: &dyn Fn(f64) -> f64| {
                let est = Estimate::from_samples(&col.iter().map(|e| f(*e)).collect::<Vec<_>>());
                records.push(SampleRecord {
                    beta,
                    t,
                    gamma,
                    lambda,
                    estimate: est.estimate,
                    stderr: est.stderr,
                    n: est.n,
                    seed: config.seed,
                });
            };
            for &g in &config.gammas {
                push(Some(g), None, &|e| e.powf(g));
            }
            for &l in &config.lambdas {
                push(None, Some(l), &|e| (l * e).exp());
            }
        }
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).map_err(|e| CliError::Io(e.to_string()))?);
        text.push('\n');
    }
    write_atomic(&out.join("samples.jsonl"), text.as_bytes())?;
    Ok(records)
}

/// Files written by [`cmd_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub path: MeasurePath,
    pub manifest: Manifest,
    pub sweeps: usize,
}

fn tolerances(c: &SolverConfig) -> BTreeMap<String, f64> {
    [
        ("q_h", c.q_h as f64),
        ("q_g", c.q_g as f64),
        ("eps_tail", c.eps_tail),
        ("tol_norm", c.tol_norm),
        ("ode_step", c.ode_step),
        ("picard_tol", c.picard_tol),
        ("picard_max_iters", c.picard_max_iters as f64),
        ("relaxation", c.relaxation),
        ("internal_horizon", c.internal_horizon),
        ("real_horizon", c.real_horizon()),
        ("extension_ratio", c.extension_ratio),
        ("cohort_step", c.cohort_step()),
        ("dtau", c.dtau),
        ("dbl_subsample", c.dbl_subsample as f64),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn json<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

/// Solves the configured problem and writes the path CSV, the manifest and,
/// for interaction fields, the Picard log. On non-convergence the log is
/// written before the error is returned. Relative input paths resolve against `base`.
pub fn cmd_solve(run: &RunConfig, base: &Path, out: &Path) -> Result<SolveOutput, CliError> {
    run.validate()?;
    let v = run.velocity.build()?;
    let mu0 = run.initial.build(base)?;
    let c = &run.solver;
    let log_file = out.join(&run.outputs.picard_log);
    let mut log = PicardLog::default();
    let mut extra = BTreeMap::new();
    let result = match run.problem {
        Problem::Linear => match run.mc_paths {
            Some(n) => {
                extra.insert("mc_paths".to_string(), json(&n)?);
                solve_linear_mc(&v, &mu0, c, n).map(|s| s.path)
            }
            None => solve_linear(&v, &mu0, c),
        },
        Problem::Nonlinear => solve_nonlinear_logged(&v, &mu0, c, &mut log).map(|s| {
            extra.insert("diagnostics".to_string(), serde_json::to_value(&s.diagnostics).unwrap_or_default());
            s.path
        }),
        Problem::Source => {
            let gamma = run.source.as_ref().expect("validated").build(base, c)?;
            solve_with_source(&v, &mu0, &gamma, c).map(|s| {
                extra.insert("injected_mass".to_string(), serde_json::to_value(&s.injected_mass).unwrap_or_default());
                log = s.log;
                s.path
            })
        }
    };
    let interaction = matches!(v, fracflow::transport::VelocityField::Interaction(_));
    let path = match result {
        Ok(p) => p,
        Err(fracflow::Error::NonConvergence { iterations, last, trace }) => {
            if log.sweeps.is_empty() {
                log.sweeps = trace
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| PicardSweep { sweep: i + 1, sup_dbl: d, wall_time: 0.0 })
                    .collect();
            }
            log.write(&log_file)?;
            return Err(fracflow::Error::NonConvergence { iterations, last, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if interaction {
        log.write(&log_file)?;
    }
    extra.insert("problem".to_string(), json(&run.problem)?);
    extra.insert("velocity".to_string(), json(&run.velocity)?);
    extra.insert("initial".to_string(), json(&run.initial)?);
    extra.insert("picard_sweeps".to_string(), json(&log.sweeps.len())?);
    let mut manifest = Manifest::describe(&path);
    manifest.tolerances = tolerances(c);
    manifest.seed = Some(c.seed);
    manifest.extra = extra;
    write_path_csv(&out.join(&run.outputs.path_csv), &path)?;
    manifest.write(&out.join(&run.outputs.manifest))?;
    Ok(SolveOutput { path, manifest, sweeps: log.sweeps.len() })
}

fn write_series(file: &Path, s: &TimeSeries) -> Result<(), CliError> {
    let rows = s.times().into_iter().zip(&s.values).map(|(t, r)| vec![t, *r]);
    write_atomic(file, &csv_bytes(&["t", "residual"], rows)?)?;
    Ok(())
}

/// Runs the suite, writes `verify_report.json` and the residual CSVs, and
/// fails with exit code 1 when any check fails.
pub fn cmd_verify(config: &VerifyConfig, only: &[u8], out: &Path) -> Result<verify::Report, CliError> {
    let suite = verify::run_suite(config, only)?;
    write_json_atomic(&out.join("verify_report.json"), &suite.report)?;
    for (name, series) in &suite.residuals {
        write_series(&out.join(format!("{name}.csv")), series)?;
    }
    if !suite.report.pass {
        let failed: Vec<String> = suite.report.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        return Err(CliError::Verification(failed.join("; ")));
    }
    Ok(suite.report)
}

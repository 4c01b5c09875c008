//! Runs, sweeps and scenario checks behind the `uav-secrecy` binary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use uav_secrecy::optimizer::{init_solution, run_scheme_with, BcdOptions, OptimizerError, SchemeId, FEAS_TOL};
use uav_secrecy::oracle::monte_carlo_eve_check;
use uav_secrecy::rates::{check_feasibility, objective, FeasibilityReport, SolutionState};
use uav_secrecy::scenario::{default_paper_scenario, load_scenario_file, ScenarioConfig};

pub mod report;
pub mod sweep;

use report::{fmt_sig, write_json, write_run, Summary};
use sweep::{SweepMeta, SweepRow, SweepSpec};

/// Samples per Monte Carlo eavesdropper check.
pub const EVE_CHECK_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    /// Process exit status.
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        if e.is_infeasible() {
            CliError::Infeasible(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

/// The scenario file, or the built-in default when no path is given.
pub fn load(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let sc = match path {
        Some(p) => load_scenario_file(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => default_paper_scenario(),
    };
    sc.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(sc)
}

/// Rate a user could reach with S overhead at peak power and nobody
/// listening. A floor above it cannot be met by any solution.
pub fn zero_leakage_capacity(sc: &ScenarioConfig) -> f64 {
    (1.0 + sc.p_s_max * sc.ref_gain / (sc.alt_s * sc.alt_s * sc.noise_power)).log2()
}

fn check_rate_floor(sc: &ScenarioConfig) -> Result<(), CliError> {
    let cap = zero_leakage_capacity(sc);
    if sc.r_min > cap {
        return Err(CliError::Infeasible(format!(
            "r_min = {} exceeds the zero-leakage capacity bound {cap:.6} bits/s/Hz",
            sc.r_min
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scenario: Option<PathBuf>,
    pub scheme: SchemeId,
    pub out: PathBuf,
    pub max_outer: Option<usize>,
    pub seed: Option<u64>,
}

fn bcd_options(max_outer: Option<usize>) -> BcdOptions {
    let mut opts = BcdOptions::default();
    if let Some(m) = max_outer {
        opts.max_outer = m;
    }
    opts
}

/// Solve one scheme on one scenario and write the artifacts to `out`.
fn solve_and_write(
    sc: &ScenarioConfig,
    scheme: SchemeId,
    opts: &BcdOptions,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Summary, CliError> {
    check_rate_floor(sc)?;
    let (state, trace) = run_scheme_with(sc, scheme, opts)?;
    let report = check_feasibility(&state, sc, FEAS_TOL);
    let gap = seed.map(|s| monte_carlo_eve_check(&state, sc, EVE_CHECK_SAMPLES, s));
    let summary = Summary::new(&trace, report, gap);
    if let Some(dir) = out {
        write_run(dir, &state, &trace, &summary)?;
    }
    if !summary.feasible {
        return Err(CliError::Solver(format!("final solution violates {:?}", summary.violated)));
    }
    Ok(summary)
}

pub fn cmd_run(opts: &RunOptions) -> Result<Summary, CliError> {
    let sc = load(opts.scenario.as_deref())?;
    solve_and_write(&sc, opts.scheme, &bcd_options(opts.max_outer), opts.seed, Some(&opts.out))
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub scenario: Option<PathBuf>,
    pub out: PathBuf,
    pub max_outer: Option<usize>,
    pub seed: Option<u64>,
    pub emit_per_point: bool,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    /// Whether the values came from the built-in grid.
    pub default_values: bool,
}

fn point_dir(out: &Path, spec: &SweepSpec, value: f64, scheme: SchemeId) -> PathBuf {
    out.join("points").join(format!("{}_{}_{}", spec.parameter.as_str(), fmt_sig(value), scheme.as_str()))
}

/// Every (value, scheme) pair, in parallel. Rows come back sorted by value,
/// then by scheme. Fails only when no point succeeds.
pub fn cmd_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<Vec<SweepRow>, CliError> {
    let base = load(opts.scenario.as_deref())?;
    std::fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    let bcd = bcd_options(opts.max_outer);
    let mut points: Vec<(f64, SchemeId)> =
        spec.values.iter().flat_map(|&v| spec.schemes.iter().map(move |&s| (v, s))).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    points.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let results: Vec<Result<Summary, CliError>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(value, scheme)| {
                let sc = spec.parameter.apply(&base, value)?;
                let dir = opts.emit_per_point.then(|| point_dir(&opts.out, spec, value, scheme));
                solve_and_write(&sc, scheme, &bcd, opts.seed, dir.as_deref())
            })
            .collect()
    });

    let rows: Vec<SweepRow> = points
        .iter()
        .zip(&results)
        .map(|(&(value, scheme), res)| match res {
            Ok(s) => SweepRow {
                parameter_value: value,
                scheme,
                objective: Some(s.final_objective),
                iterations: s.iterations,
                feasible: s.feasible,
                error: None,
            },
            Err(e) => SweepRow {
                parameter_value: value,
                scheme,
                objective: None,
                iterations: 0,
                feasible: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    write_sweep_csv(&opts.out.join("sweep.csv"), &rows)?;
    let meta = SweepMeta {
        parameter: spec.parameter,
        values: spec.values.clone(),
        schemes: spec.schemes.clone(),
        values_source: if opts.default_values { "builtin_default" } else { "command_line" }.into(),
        failures: rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("{} {}: {e}", fmt_sig(r.parameter_value), r.scheme)))
            .collect(),
    };
    write_json(&opts.out.join("sweep_meta.json"), &meta)?;

    if rows.iter().any(|r| r.error.is_none()) {
        Ok(rows)
    } else {
        Err(results.into_iter().find_map(Result::err).expect("every point failed"))
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(["parameter_value", "scheme", "objective", "iterations", "feasible"])
        .map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.write_record([
            fmt_sig(r.parameter_value),
            r.scheme.as_str().to_string(),
            r.objective.map_or_else(|| "nan".to_string(), fmt_sig),
            r.iterations.to_string(),
            r.feasible.to_string(),
        ])
        .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Outcome of `validate`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidateReport {
    pub num_users: usize,
    pub num_pus: usize,
    pub num_slots: usize,
    pub initial_objective: f64,
    pub zero_leakage_capacity: f64,
    /// Families the initial point violates (a rate floor is normal here).
    pub initial_violations: Vec<String>,
    pub initial_feasibility: FeasibilityReport,
    pub eve_check_min_gap: Option<f64>,
}

/// Parse and check a scenario, build the initial point and, with a seed,
/// sample the eavesdropper disc against the worst-case rates.
pub fn cmd_validate(scenario: Option<&Path>, seed: Option<u64>) -> Result<ValidateReport, CliError> {
    let sc = load(scenario)?;
    check_rate_floor(&sc)?;
    let init: SolutionState = init_solution(&sc)?;
    let rep = check_feasibility(&init, &sc, FEAS_TOL);
    let gap = seed.map(|s| monte_carlo_eve_check(&init, &sc, EVE_CHECK_SAMPLES, s));
    if let Some(g) = gap {
        if g < -1e-9 {
            return Err(CliError::Solver(format!("worst-case rates exceed a sampled true rate by {}", -g)));
        }
    }
    Ok(ValidateReport {
        num_users: sc.num_users,
        num_pus: sc.num_pus,
        num_slots: sc.num_slots,
        initial_objective: objective(&init, &sc),
        zero_leakage_capacity: zero_leakage_capacity(&sc),
        initial_violations: rep.violated().into_iter().map(String::from).collect(),
        initial_feasibility: rep,
        eve_check_min_gap: gap,
    })
}

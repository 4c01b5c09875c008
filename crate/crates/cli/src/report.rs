//! Result files: per-run CSVs, the JSON summary and reading a run back.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uav_secrecy::channel::Position2D;
use uav_secrecy::optimizer::IterationTrace;
use uav_secrecy::rates::{FeasibilityReport, SolutionState};
use uav_secrecy::scenario::ScenarioConfig;

use crate::CliError;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const POWER_CSV: &str = "power.csv";
pub const SCHEDULE_CSV: &str = "schedule.csv";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Nine significant digits, trailing zeros trimmed. Deterministic for a
/// given `f64`, so repeated runs produce identical files.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}").to_lowercase();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-3..9).contains(&exp) {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').expect("exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{e}");
    }
    let s = format!("{:.*}", (8 - exp).max(0) as usize, x);
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" { "0".into() } else { s.into() }
}

/// What `summary.json` holds for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: String,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_delta: Option<f64>,
    pub polish_passes: usize,
    pub runtime_s: f64,
    pub feasible: bool,
    pub violated: Vec<String>,
    pub feasibility: FeasibilityReport,
    /// Smallest gap between sampled true secrecy rates and the worst-case
    /// values, present when a seed was given.
    pub eve_check_min_gap: Option<f64>,
}

impl Summary {
    pub fn new(trace: &IterationTrace, report: FeasibilityReport, eve_check_min_gap: Option<f64>) -> Self {
        Self {
            scheme: trace.scheme.as_str().into(),
            initial_objective: trace.initial_objective,
            final_objective: trace.final_objective,
            iterations: trace.iterations.len(),
            converged: trace.converged,
            last_delta: trace.last_delta(),
            polish_passes: trace.polish_passes,
            runtime_s: trace.wall_time_s,
            feasible: report.overall_feasible,
            violated: report.violated().into_iter().map(String::from).collect(),
            feasibility: report,
            eve_check_min_gap,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_trajectory(path: &Path, state: &SolutionState) -> Result<(), CliError> {
    let rows = state.traj_s.iter().zip(&state.traj_j).enumerate().map(|(n, (s, j))| {
        vec![(n + 1).to_string(), fmt_sig(s.x), fmt_sig(s.y), fmt_sig(j.x), fmt_sig(j.y)]
    });
    write_rows(path, &header(&["slot", "x_s", "y_s", "x_j", "y_j"]), rows)
}

pub fn write_power(path: &Path, state: &SolutionState) -> Result<(), CliError> {
    let mut head = vec!["slot".to_string()];
    head.extend((1..=state.num_users()).map(|k| format!("p_user_{k}")));
    head.push("p_j".into());
    let rows = (0..state.num_slots()).map(|n| {
        let mut row = vec![(n + 1).to_string()];
        row.extend(state.user_power.iter().map(|p| fmt_sig(p[n])));
        row.push(fmt_sig(state.jam_power[n]));
        row
    });
    write_rows(path, &head, rows)
}

/// Users are numbered from 1; 0 marks an idle slot. The schedule must be binary.
pub fn write_schedule(path: &Path, state: &SolutionState) -> Result<(), CliError> {
    let rows = (0..state.num_slots())
        .map(|n| vec![(n + 1).to_string(), state.active_user(n).map_or(0, |k| k + 1).to_string()]);
    write_rows(path, &header(&["slot", "active_user"]), rows)
}

/// Iteration 0 is the initial point.
pub fn write_convergence(path: &Path, trace: &IterationTrace) -> Result<(), CliError> {
    let rows = std::iter::once(vec!["0".to_string(), fmt_sig(trace.initial_objective)]).chain(
        trace.iterations.iter().map(|r| vec![r.iteration.to_string(), fmt_sig(r.objective)]),
    );
    write_rows(path, &header(&["iter", "objective"]), rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// All run artifacts into `dir`, creating it when needed.
pub fn write_run(dir: &Path, state: &SolutionState, trace: &IterationTrace, summary: &Summary) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_trajectory(&dir.join(TRAJECTORY_CSV), state)?;
    write_power(&dir.join(POWER_CSV), state)?;
    write_schedule(&dir.join(SCHEDULE_CSV), state)?;
    write_convergence(&dir.join(CONVERGENCE_CSV), trace)?;
    write_json(&dir.join(SUMMARY_JSON), summary)
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::csv(path, e))?;
            rec.iter()
                .map(|f| f.parse::<f64>().map_err(|e| CliError::Input(format!("{}: {f:?}: {e}", path.display()))))
                .collect()
        })
        .collect()
}

/// Rebuild the solution written by [`write_run`]. Endpoint slots that agree
/// with the scenario up to the printed precision are snapped onto it.
pub fn read_solution(dir: &Path, sc: &ScenarioConfig) -> Result<SolutionState, CliError> {
    let traj = read_table(&dir.join(TRAJECTORY_CSV))?;
    let power = read_table(&dir.join(POWER_CSV))?;
    let sched = read_table(&dir.join(SCHEDULE_CSV))?;
    let nn = traj.len();
    let kk = sc.num_users;
    if power.len() != nn || sched.len() != nn || nn == 0 {
        return Err(CliError::Input("result files disagree on the number of slots".into()));
    }
    if power.iter().any(|row| row.len() != kk + 2) {
        return Err(CliError::Input(format!("power.csv must have {} columns", kk + 2)));
    }
    let mut state = SolutionState {
        schedule: vec![vec![0.0; nn]; kk],
        user_power: (0..kk).map(|k| power.iter().map(|row| row[k + 1]).collect()).collect(),
        jam_power: power.iter().map(|row| row[kk + 1]).collect(),
        traj_s: traj.iter().map(|row| Position2D::new(row[1], row[2])).collect(),
        traj_j: traj.iter().map(|row| Position2D::new(row[3], row[4])).collect(),
    };
    for (n, row) in sched.iter().enumerate() {
        let k = row[1] as usize;
        if k > kk || row[1].fract() != 0.0 {
            return Err(CliError::Input(format!("schedule.csv: bad user {} in slot {}", row[1], n + 1)));
        }
        if k > 0 {
            state.schedule[k - 1][n] = 1.0;
        }
    }
    let snap = |q: &mut Position2D, target: Position2D| {
        let scale = target.x.abs().max(target.y.abs()).max(1.0);
        if q.dist(&target) <= 1e-8 * scale {
            *q = target;
        }
    };
    snap(&mut state.traj_s[0], sc.start_s);
    snap(&mut state.traj_s[nn - 1], sc.end_s);
    snap(&mut state.traj_j[0], sc.start_j);
    snap(&mut state.traj_j[nn - 1], sc.end_j);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(4.691093123456), "4.69109312");
        assert_eq!(fmt_sig(-55.0), "-55");
        assert_eq!(fmt_sig(0.00125), "0.00125");
        assert_eq!(fmt_sig(0.0001), "1e-4");
        assert_eq!(fmt_sig(1.8282931654e-5), "1.82829317e-5");
        assert_eq!(fmt_sig(1e-11), "1e-11");
        assert_eq!(fmt_sig(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(9.9999999999), "10");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }
}

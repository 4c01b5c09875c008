//! Block coordinate descent over the four subproblems, initialization and the
//! benchmark schemes.

use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Position2D;
use crate::convex_core::{solve_program_lp, solve_with, SolveStatus, SolverOptions};
use crate::rates::{check_feasibility, interference_at_pu, objective, secrecy_matrix, SolutionState};
use crate::scenario::ScenarioConfig;
use crate::subproblems::{
    build_j_trajectory_program, build_power_program_masked, build_s_trajectory_program, build_scheduling_lp,
    repair_schedule, round_schedule, Block, BlockProgram, ExpansionPoint, PowerMask, SchedulingInstance,
};

/// Tolerance of the feasibility guard applied to every accepted block update.
pub const FEAS_TOL: f64 = 1e-6;
/// A block update may not lower the objective by more than this.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Proposed,
    BenchmarkI,
    BenchmarkIi,
    BenchmarkIii,
    Npc,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] =
        [SchemeId::Proposed, SchemeId::BenchmarkI, SchemeId::BenchmarkIi, SchemeId::BenchmarkIii, SchemeId::Npc];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::BenchmarkI => "benchmark_i",
            SchemeId::BenchmarkIi => "benchmark_ii",
            SchemeId::BenchmarkIii => "benchmark_iii",
            SchemeId::Npc => "npc",
        }
    }

    fn steps(self) -> Vec<Step> {
        use Step::*;
        match self {
            SchemeId::Proposed => vec![Schedule, Power(PowerMask::ALL), Source, Jammer],
            SchemeId::BenchmarkI => vec![Schedule],
            SchemeId::BenchmarkIi => vec![Schedule, Power(PowerMask { users: true, jammer: false }), Source],
            SchemeId::BenchmarkIii => vec![Schedule, Power(PowerMask { users: false, jammer: true }), Jammer],
            SchemeId::Npc => vec![Schedule, Source, Jammer],
        }
    }

    /// Whether the scheme may change user powers (and so apply the cutoff).
    fn optimizes_user_power(self) -> bool {
        matches!(self, SchemeId::Proposed | SchemeId::BenchmarkIi)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| format!("unknown scheme '{s}' (expected one of proposed, benchmark_i, benchmark_ii, benchmark_iii, npc)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Schedule,
    Power(PowerMask),
    Source,
    Jammer,
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("infeasible initial point: violated {0:?}")]
    InfeasibleInit(Vec<&'static str>),
    #[error("{block:?} subproblem infeasible at outer iteration {iteration}")]
    Infeasible { block: Block, iteration: usize },
    #[error("no feasible binary schedule found after rounding")]
    Rounding,
}

impl OptimizerError {
    /// Infeasibility of the instance rather than a numerical failure.
    pub fn is_infeasible(&self) -> bool {
        !matches!(self, OptimizerError::Init(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: Block,
    pub status: SolveStatus,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub iterations: usize,
    /// Whether the update passed the feasibility and monotonicity guard.
    pub accepted: bool,
    /// Objective after the block (unchanged when rejected).
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub blocks: Vec<BlockRecord>,
    pub wall_time_s: f64,
}

/// History of one run. `iterations` holds the outer loop on the relaxed
/// schedule; `final_objective` is the value after rounding and polishing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub scheme: SchemeId,
    pub initial_objective: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub final_objective: f64,
    pub polish_passes: usize,
    pub wall_time_s: f64,
}

impl IterationTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective).collect()
    }

    /// Largest drop between consecutive outer iterations (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.iterations
            .windows(2)
            .map(|w| w[0].objective - w[1].objective)
            .fold(0.0, f64::max)
    }

    /// Improvement of the last outer iteration over the one before it.
    pub fn last_delta(&self) -> Option<f64> {
        let n = self.iterations.len();
        (n >= 2).then(|| self.iterations[n - 1].objective - self.iterations[n - 2].objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    pub max_outer: usize,
    /// Stop once an outer iteration improves the objective by at most this;
    /// `None` uses the scenario's epsilon.
    pub epsilon: Option<f64>,
    pub solver: SolverOptions,
    /// Upper bound on polishing passes after rounding.
    pub max_polish: usize,
    /// SCA re-linearizations per continuous block and outer iteration; the
    /// block stops early once one improves the objective by less than a
    /// tenth of epsilon.
    pub inner_sca: usize,
    /// For schemes that optimize both a power and a trajectory, hold the
    /// powers until the trajectory blocks stall, then run every block.
    pub warmup: bool,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self { max_outer: 50, epsilon: None, solver: SolverOptions::default(), max_polish: 10, inner_sca: 3, warmup: true }
    }
}

/// Circular initial trajectories around the user centroid, averages powers
/// and a round-robin schedule. The endpoints must lie on the circles.
pub fn init_solution(sc: &ScenarioConfig) -> Result<SolutionState, OptimizerError> {
    let nn = sc.num_slots;
    let kk = sc.num_users;
    let c = sc.user_centroid();
    let (r_s, r_j) = sc.init_radii();
    let traj_s = circle(&c, r_s, &sc.start_s, &sc.end_s, nn).map_err(|e| OptimizerError::Init(format!("S: {e}")))?;
    let traj_j = circle(&c, r_j, &sc.start_j, &sc.end_j, nn).map_err(|e| OptimizerError::Init(format!("J: {e}")))?;
    if sc.eve_radius > 0.0 && traj_s.iter().any(|q| q.dist(&sc.eve_center) < sc.eve_radius) {
        return Err(OptimizerError::Init("the initial S circle crosses the eavesdropper disc".into()));
    }
    let mut schedule = vec![vec![0.0; nn]; kk];
    for n in 0..nn {
        schedule[n % kk][n] = 1.0;
    }
    let mut state = SolutionState {
        schedule,
        user_power: vec![vec![sc.p_s_ave; nn]; kk],
        jam_power: vec![sc.p_j_ave; nn],
        traj_s,
        traj_j,
    };
    // shrink both powers uniformly when the circles already break a PU cap
    let ratio = (0..sc.num_pus)
        .map(|r| sc.interference_threshold[r] / interference_at_pu(&state, sc, r))
        .fold(f64::INFINITY, f64::min);
    if ratio < 1.0 {
        let f = ratio * (1.0 - 1e-9);
        state.user_power.iter_mut().flatten().for_each(|p| *p *= f);
        state.jam_power.iter_mut().for_each(|p| *p *= f);
    }
    Ok(state)
}

/// Constant-speed lap of the circle starting and ending at `start`.
fn circle(c: &Position2D, radius: f64, start: &Position2D, end: &Position2D, nn: usize) -> Result<Vec<Position2D>, String> {
    let tol = 1e-6 * (1.0 + radius);
    if start.dist(end) > 1e-9 {
        return Err("circular initialization needs start == end".into());
    }
    if (start.dist(c) - radius).abs() > tol {
        return Err(format!(
            "start point is {:.3} m from the user centroid but the initial radius is {radius:.3} m",
            start.dist(c)
        ));
    }
    let phase = (start.y - c.y).atan2(start.x - c.x);
    let mut out: Vec<Position2D> = (0..nn)
        .map(|n| {
            let a = phase + 2.0 * PI * n as f64 / (nn.max(2) - 1) as f64;
            Position2D::new(c.x + radius * a.cos(), c.y + radius * a.sin())
        })
        .collect();
    out[0] = *start;
    out[nn - 1] = *end;
    Ok(out)
}

/// Zero the user power of every scheduled `(user, slot)` whose unclamped
/// secrecy rate is negative.
pub fn apply_power_cutoff(state: &SolutionState, sc: &ScenarioConfig) -> SolutionState {
    let rates = secrecy_matrix(state, sc);
    let mut out = state.clone();
    for (k, row) in rates.iter().enumerate() {
        for (n, &r) in row.iter().enumerate() {
            if state.schedule[k][n] > 0.0 && r < 0.0 {
                out.user_power[k][n] = 0.0;
            }
        }
    }
    out
}

/// Full joint optimization (the proposed scheme).
pub fn bcd_solve(sc: &ScenarioConfig, max_outer: usize) -> Result<(SolutionState, IterationTrace), OptimizerError> {
    run_scheme_with(sc, SchemeId::Proposed, &BcdOptions { max_outer, ..BcdOptions::default() })
}

pub fn run_scheme(sc: &ScenarioConfig, scheme: SchemeId) -> Result<(SolutionState, IterationTrace), OptimizerError> {
    run_scheme_with(sc, scheme, &BcdOptions::default())
}

fn guard_ok(state: &SolutionState, sc: &ScenarioConfig) -> bool {
    check_feasibility(state, sc, FEAS_TOL).feasible_except(&["binariness"])
}

struct Runner<'a> {
    sc: &'a ScenarioConfig,
    scheme: SchemeId,
    opts: &'a BcdOptions,
    /// Powers held fixed, see [`BcdOptions::warmup`].
    warming: Cell<bool>,
}

impl Runner<'_> {
    /// The power cutoff only applies once user powers are being optimized.
    fn cutoff(&self) -> bool {
        self.scheme.optimizes_user_power() && !self.warming.get()
    }

    fn solve_program(&self, bp: &BlockProgram) -> crate::convex_core::SolveReport {
        if bp.block == Block::Scheduling {
            solve_program_lp(&bp.program).expect("scheduling program is affine")
        } else {
            solve_with(&bp.program, &self.opts.solver)
        }
    }

    /// Solve one block at `state` and apply the guard. Returns the new state
    /// (the old one when rejected) and the record.
    fn step(
        &self,
        step: Step,
        state: &SolutionState,
        iteration: usize,
    ) -> Result<(SolutionState, BlockRecord), OptimizerError> {
        let sc = self.sc;
        let exp = ExpansionPoint::from(state);
        let bp = match step {
            Step::Schedule => build_scheduling_lp(state, sc),
            Step::Power(mask) => build_power_program_masked(state, sc, &exp, mask),
            Step::Source => build_s_trajectory_program(state, sc, &exp),
            Step::Jammer => build_j_trajectory_program(state, sc, &exp),
        };
        let rep = self.solve_program(&bp);
        let mut record = BlockRecord {
            block: bp.block,
            status: rep.status,
            kkt_stationarity: rep.kkt_stationarity,
            kkt_feasibility: rep.kkt_feasibility,
            iterations: rep.iterations,
            accepted: false,
            objective: objective(state, sc),
        };
        let state_ok = guard_ok(state, sc);
        match rep.status {
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                if state_ok {
                    // the current point is feasible for every block, so this
                    // is a numerical failure: keep the previous value
                    return Ok((state.clone(), record));
                }
                return Err(OptimizerError::Infeasible { block: bp.block, iteration });
            }
            SolveStatus::MaxIter if bp.block == Block::Scheduling => return Ok((state.clone(), record)),
            _ => {}
        }
        let mut cand = bp.decode(&rep.x_opt, state);
        if self.cutoff() {
            cand = apply_power_cutoff(&cand, sc);
        }
        let better = objective(&cand, sc) >= objective(state, sc) - MONOTONE_SLACK;
        if guard_ok(&cand, sc) && (better || !state_ok) {
            record.accepted = true;
            record.objective = objective(&cand, sc);
            Ok((cand, record))
        } else {
            Ok((state.clone(), record))
        }
    }

    /// Repeat an SCA block at successive expansion points. The record merges
    /// the inner solves (worst status, summed iterations).
    fn inner(
        &self,
        step: Step,
        state: &SolutionState,
        iteration: usize,
        eps: f64,
    ) -> Result<(SolutionState, BlockRecord), OptimizerError> {
        let (mut cur, mut rec) = self.step(step, state, iteration)?;
        if step == Step::Schedule {
            return Ok((cur, rec));
        }
        let mut gain = rec.objective - objective(state, self.sc);
        for _ in 1..self.opts.inner_sca.max(1) {
            if !rec.accepted || gain < 0.1 * eps {
                break;
            }
            let before = rec.objective;
            let (next, r) = self.step(step, &cur, iteration)?;
            cur = next;
            rec.iterations += r.iterations;
            if r.status != SolveStatus::Optimal {
                rec.status = r.status;
            }
            rec.kkt_stationarity = r.kkt_stationarity;
            rec.kkt_feasibility = r.kkt_feasibility;
            gain = r.objective - before;
            rec.objective = r.objective;
            if !r.accepted {
                break;
            }
        }
        Ok((cur, rec))
    }

    /// Make the schedule binary and feasible, keeping powers and positions.
    fn binarize(&self, state: &SolutionState) -> Result<SolutionState, OptimizerError> {
        let inst = SchedulingInstance::from_state(state, self.sc);
        let rounded = round_schedule(&state.schedule, &inst.rates);
        // fall back to a plain per-slot argmax when the thresholded rounding
        // cannot be repaired
        let argmax: Vec<Vec<f64>> = {
            let kk = state.num_users();
            let mut t = vec![vec![0.0; state.num_slots()]; kk];
            for n in 0..state.num_slots() {
                let best = (0..kk).fold(0, |b, k| if state.schedule[k][n] > state.schedule[b][n] { k } else { b });
                if state.schedule[best][n] > 0.0 {
                    t[best][n] = 1.0;
                }
            }
            t
        };
        let theta = repair_schedule(&inst, &rounded)
            .or_else(|| repair_schedule(&inst, &argmax))
            .ok_or(OptimizerError::Rounding)?;
        Ok(SolutionState { schedule: theta, ..state.clone() })
    }

    fn run(&self) -> Result<(SolutionState, IterationTrace), OptimizerError> {
        let sc = self.sc;
        let t0 = Instant::now();
        let eps = self.opts.epsilon.unwrap_or(sc.epsilon);
        let steps = self.scheme.steps();
        let is_power = |s: &Step| matches!(s, Step::Power(_));
        let moves = steps.iter().any(|s| matches!(s, Step::Source | Step::Jammer));
        self.warming.set(self.opts.warmup && moves && steps.iter().any(is_power));
        let mut state = init_solution(sc)?;
        if self.cutoff() {
            state = apply_power_cutoff(&state, sc);
        }
        let report = check_feasibility(&state, sc, FEAS_TOL);
        let hard: Vec<_> = report.violated().into_iter().filter(|f| !matches!(*f, "min_rate" | "binariness")).collect();
        if !hard.is_empty() {
            return Err(OptimizerError::InfeasibleInit(hard));
        }
        let mut trace = IterationTrace {
            scheme: self.scheme,
            initial_objective: objective(&state, sc),
            iterations: Vec::new(),
            converged: false,
            final_objective: f64::NAN,
            polish_passes: 0,
            wall_time_s: 0.0,
        };
        let mut prev = f64::NEG_INFINITY;
        for m in 1..=self.opts.max_outer {
            let ti = Instant::now();
            let mut blocks = Vec::with_capacity(steps.len());
            for s in steps.iter().filter(|s| !(self.warming.get() && is_power(s))) {
                let s = *s;
                let (next, rec) = self.inner(s, &state, m, eps)?;
                state = next;
                blocks.push(rec);
            }
            let obj = objective(&state, sc);
            trace.iterations.push(IterationRecord {
                iteration: m,
                objective: obj,
                blocks,
                wall_time_s: ti.elapsed().as_secs_f64(),
            });
            if obj - prev <= eps {
                if !self.warming.get() {
                    trace.converged = true;
                    break;
                }
                self.warming.set(false);
            }
            prev = obj;
        }
        self.warming.set(false);
        if !guard_ok(&state, sc) {
            return Err(OptimizerError::Infeasible { block: Block::Scheduling, iteration: trace.iterations.len() });
        }

        // binary schedule, then alternate the continuous blocks with 1-opt
        // schedule moves until nothing improves
        state = self.binarize(&state)?;
        let polish: Vec<Step> = steps.iter().copied().filter(|s| *s != Step::Schedule).collect();
        let mut last = objective(&state, sc);
        for pass in 0..self.opts.max_polish {
            trace.polish_passes = pass + 1;
            for &s in &polish {
                state = self.inner(s, &state, trace.iterations.len() + pass + 1, eps)?.0;
            }
            let inst = SchedulingInstance::from_state(&state, sc);
            if let Some(theta) = repair_schedule(&inst, &state.schedule) {
                let cand = SolutionState { schedule: theta, ..state.clone() };
                if guard_ok(&cand, sc) && objective(&cand, sc) >= objective(&state, sc) {
                    state = cand;
                }
            }
            let obj = objective(&state, sc);
            if obj - last <= 0.1 * eps {
                break;
            }
            last = obj;
        }
        if self.scheme.optimizes_user_power() {
            state = apply_power_cutoff(&state, sc);
        }
        trace.final_objective = objective(&state, sc);
        trace.wall_time_s = t0.elapsed().as_secs_f64();
        Ok((state, trace))
    }
}

pub fn run_scheme_with(
    sc: &ScenarioConfig,
    scheme: SchemeId,
    opts: &BcdOptions,
) -> Result<(SolutionState, IterationTrace), OptimizerError> {
    Runner { sc, scheme, opts, warming: Cell::new(false) }.run()
}

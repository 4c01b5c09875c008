//! Block subproblems of the alternating optimization: user scheduling (an LP),
//! transmit power, the source trajectory and the jammer trajectory (convex
//! surrogates around an expansion point).
//!
//! Every builder returns a [`BlockProgram`] that owns the [`ConvexProgram`]
//! plus the variable layout needed to map a solution back into a
//! [`SolutionState`]. Distance slacks are stored normalized (`d = scale * z`)
//! so that all constraint rows are O(1) regardless of geometry.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{los_gain, worst_case_gain_je, Position2D};
use crate::convex_core::{smooth, Affine, ConvexProgram, Eval, SmoothFn, SparseVec};
use crate::rates::{rate_user, secrecy_matrix, slot_gains, SlotGains, SolutionState};
use crate::scenario::ScenarioConfig;

/// Smallest radius the jammer distance epigraph may take (m).
const RHO_FLOOR: f64 = 1e-3;
/// Relaxed schedule entries this close to 0 or 1 are snapped.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Scheduling,
    Power,
    SourceTrajectory,
    JammerTrajectory,
}

/// Iterate around which the surrogates are built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub user_power: Vec<Vec<f64>>,
    pub jam_power: Vec<f64>,
    pub traj_s: Vec<Position2D>,
    pub traj_j: Vec<Position2D>,
}

impl From<&SolutionState> for ExpansionPoint {
    fn from(s: &SolutionState) -> Self {
        Self {
            user_power: s.user_power.clone(),
            jam_power: s.jam_power.clone(),
            traj_s: s.traj_s.clone(),
            traj_j: s.traj_j.clone(),
        }
    }
}

impl ExpansionPoint {
    /// `state` with its powers and trajectories replaced by the expansion.
    fn apply(&self, state: &SolutionState) -> SolutionState {
        SolutionState {
            schedule: state.schedule.clone(),
            user_power: self.user_power.clone(),
            jam_power: self.jam_power.clone(),
            traj_s: self.traj_s.clone(),
            traj_j: self.traj_j.clone(),
        }
    }
}

/// Slack variables of the trajectory blocks in physical units (m^2).
/// Entries a block does not use are empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlackVars {
    pub d_se: Vec<f64>,
    pub d_su: Vec<Vec<f64>>,
    pub d_je: Vec<f64>,
    pub d_ju: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Closed-form pieces

/// Lower bound of the unclamped secrecy rate obtained by linearizing the
/// eavesdropper's total received power around `(p_k^m, p_j^m)`. Concave in
/// `(p_k, p_j)` and tight at the expansion.
pub fn power_lb_rate(p_k: f64, p_j: f64, expansion: (f64, f64), gains: SlotGains, noise: f64) -> f64 {
    let (pkm, pjm) = expansion;
    let den = pjm * gains.je + noise + pkm * gains.se;
    (rate_user(p_k, gains.sd, noise) + (p_j * gains.je + noise).log2() - den.log2())
        - (gains.je * (p_j - pjm) + gains.se * (p_k - pkm)) / (LN_2 * den)
}

/// Gradient of [`power_lb_rate`] with respect to `(p_k, p_j)`.
pub fn power_lb_rate_grad(p_k: f64, p_j: f64, expansion: (f64, f64), gains: SlotGains, noise: f64) -> (f64, f64) {
    let (pkm, pjm) = expansion;
    let den = pjm * gains.je + noise + pkm * gains.se;
    let dk = gains.sd / (LN_2 * (noise + p_k * gains.sd)) - gains.se / (LN_2 * den);
    let dj = gains.je / (LN_2 * (p_j * gains.je + noise)) - gains.je / (LN_2 * den);
    (dk, dj)
}

/// Constant `D` and slope `L <= 0` of the affine under-estimator
/// `L (|q - w|^2 - |q^m - w|^2) + D` of `log2(1 + c rho_0 / (|q - w|^2 + H^2))`.
pub fn s_rate_bound_coeffs(q_s_m: &Position2D, w_dk: &Position2D, c_n: f64, alt_s: f64, ref_gain: f64) -> (f64, f64) {
    let u = q_s_m.dist2(w_dk) + alt_s * alt_s;
    let cr = c_n * ref_gain;
    let d = (cr / u).ln_1p() / LN_2;
    let l = -cr / (LN_2 * (u + cr) * u);
    (d, l)
}

/// `(M, N)` for the jammer's noise term `log2(P_J rho_0 / (s + H^2) + sigma^2)`
/// at the expanded squared distance `s = (|q_J^m - w_E| + r_E)^2`: `M` is the
/// reciprocal of the argument over `ln 2` and `N` the term's value. The slope
/// in `s` is `M * d/ds[P_J rho_0 / (s + H^2)]`, see [`j_composite_slope`].
pub fn j_rate_bound_terms(
    q_j_m: &Position2D,
    eve_center: &Position2D,
    r_e: f64,
    p_j: f64,
    alt_j: f64,
    ref_gain: f64,
    noise: f64,
) -> (f64, f64) {
    let far = q_j_m.dist(eve_center) + r_e;
    let arg = p_j * ref_gain / (far * far + alt_j * alt_j) + noise;
    (1.0 / (arg * LN_2), arg.log2())
}

/// Derivative of `log2(P_J rho_0 / (s + H^2) + sigma^2)` with respect to `s`
/// at `s_m`, given `M` from [`j_rate_bound_terms`]. Never positive.
pub fn j_composite_slope(m: f64, p_j: f64, s_m: f64, alt_j: f64, ref_gain: f64) -> f64 {
    let u = s_m + alt_j * alt_j;
    -m * p_j * ref_gain / (u * u)
}

// ---------------------------------------------------------------------------
// Rate terms shared by the SCA blocks

/// One `(user, slot)` surrogate secrecy rate as a function of the block's
/// variables.
#[derive(Debug, Clone)]
enum RateTerm {
    /// Nothing in the block moves this rate.
    Const(f64),
    /// Powers normalized by their peaks: `x = P_k / P_max`, `y = P_J / P_J,max`.
    Power { x: usize, y: usize, a: f64, b: f64, c: f64, xm: f64, ym: f64 },
    /// `D + L (|q - w|^2 - s_m) - log2(1 + eve / (scale z + h2))`, `q = (x[qx], x[qx + 1])`.
    Source { qx: usize, z: usize, w: Position2D, l: f64, d: f64, s_m: f64, eve: f64, scale: f64, h2: f64 },
    /// `user - log2(1 + e + b / (scale z + h2)) + phi_m + slope ((rho + r)^2 - s_m)`.
    Jammer {
        rho: usize,
        z: usize,
        user: f64,
        e: f64,
        b: f64,
        scale: f64,
        h2: f64,
        phi_m: f64,
        slope: f64,
        s_m: f64,
        r: f64,
    },
}

impl RateTerm {
    /// Add `w * term` into `out` (value, gradient, Hessian).
    fn accumulate(&self, x: &[f64], w: f64, hess: bool, out: &mut Eval) {
        match *self {
            RateTerm::Const(v) => out.value += w * v,
            RateTerm::Power { x: xi, y: yi, a, b, c, xm, ym } => {
                let (px, py) = (x[xi], x[yi]);
                let den = 1.0 + b * ym + c * xm;
                let v = ((a * px).ln_1p() + (b * py).ln_1p() - den.ln() - (b * (py - ym) + c * (px - xm)) / den) / LN_2;
                out.value += w * v;
                out.grad.push((xi, w * (a / (1.0 + a * px) - c / den) / LN_2));
                out.grad.push((yi, w * (b / (1.0 + b * py) - b / den) / LN_2));
                if hess {
                    let hx = -a * a / ((1.0 + a * px).powi(2) * LN_2);
                    let hy = -b * b / ((1.0 + b * py).powi(2) * LN_2);
                    out.hess.push((xi, xi, w * hx));
                    out.hess.push((yi, yi, w * hy));
                }
            }
            RateTerm::Source { qx, z, w: wk, l, d, s_m, eve, scale, h2 } => {
                let (dx, dy) = (x[qx] - wk.x, x[qx + 1] - wk.y);
                let mut v = d + l * (dx * dx + dy * dy - s_m);
                out.grad.push((qx, w * 2.0 * l * dx));
                out.grad.push((qx + 1, w * 2.0 * l * dy));
                if hess {
                    out.hess.push((qx, qx, w * 2.0 * l));
                    out.hess.push((qx + 1, qx + 1, w * 2.0 * l));
                }
                if eve > 0.0 {
                    let u = scale * x[z] + h2;
                    if u <= 0.0 {
                        out.value = f64::NAN;
                        return;
                    }
                    v += (u.ln() - (u + eve).ln()) / LN_2;
                    out.grad.push((z, w * scale * (1.0 / u - 1.0 / (u + eve)) / LN_2));
                    if hess {
                        let h = (1.0 / ((u + eve) * (u + eve)) - 1.0 / (u * u)) / LN_2;
                        out.hess.push((z, z, w * scale * scale * h));
                    }
                }
                out.value += w * v;
            }
            RateTerm::Jammer { rho, z, user, e, b, scale, h2, phi_m, slope, s_m, r } => {
                let mut v = user + phi_m;
                if b > 0.0 {
                    let u = scale * x[z] + h2;
                    if u <= 0.0 {
                        out.value = f64::NAN;
                        return;
                    }
                    let big = (1.0 + e) * u + b;
                    v += (u.ln() - big.ln()) / LN_2;
                    out.grad.push((z, w * scale * (1.0 / u - (1.0 + e) / big) / LN_2));
                    let pr = x[rho] + r;
                    v += slope * (pr * pr - s_m);
                    out.grad.push((rho, w * 2.0 * slope * pr));
                    if hess {
                        let h = ((1.0 + e) * (1.0 + e) / (big * big) - 1.0 / (u * u)) / LN_2;
                        out.hess.push((z, z, w * scale * scale * h));
                        out.hess.push((rho, rho, w * 2.0 * slope));
                    }
                } else {
                    v += -(1.0 + e).log2();
                }
                out.value += w * v;
            }
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut e = Eval::default();
        self.accumulate(x, 1.0, false, &mut e);
        e.value
    }
}

/// Surrogate terms of one user: `(slot, theta, term)`.
type UserTerms = Vec<(usize, f64, RateTerm)>;

/// `eta_k - (1/N) sum_n theta_k(n) R_k(n) <= 0`.
fn rate_row(eta: usize, terms: Arc<Vec<UserTerms>>, k: usize, n_slots: usize) -> Box<dyn SmoothFn> {
    let inv_n = 1.0 / n_slots as f64;
    smooth(move |x, hess| {
        let mut e = Eval::default();
        for (_, theta, t) in &terms[k] {
            t.accumulate(x, -theta * inv_n, hess, &mut e);
        }
        e.value += x[eta];
        e.grad.push((eta, 1.0));
        e
    })
}

/// `scale z - T(q) <= 0` normalized by `scale`, for an affine tangent
/// `T(q) = t0 + g . (q - q^m)`.
fn tangent_row(z: usize, qx: usize, scale: f64, t0: f64, g: (f64, f64), qm: &Position2D) -> Box<dyn SmoothFn> {
    let coeffs = vec![(z, 1.0), (qx, -g.0 / scale), (qx + 1, -g.1 / scale)];
    let constant = -(t0 - g.0 * qm.x - g.1 * qm.y) / scale;
    Box::new(Affine::new(coeffs, constant))
}

/// `(|q_n - q_{n+1}|^2) / step^2 - 1 <= 0` for consecutive slots.
fn speed_row(a: usize, b: usize, step: f64) -> Box<dyn SmoothFn> {
    let s2 = step * step;
    smooth(move |x, hess| {
        let (dx, dy) = (x[b] - x[a], x[b + 1] - x[a + 1]);
        let mut e = Eval {
            value: (dx * dx + dy * dy) / s2 - 1.0,
            grad: vec![(a, -2.0 * dx / s2), (a + 1, -2.0 * dy / s2), (b, 2.0 * dx / s2), (b + 1, 2.0 * dy / s2)],
            hess: Vec::new(),
        };
        if hess {
            let h = 2.0 / s2;
            e.hess = vec![(a, a, h), (a + 1, a + 1, h), (b, b, h), (b + 1, b + 1, h), (b, a, -h), (b + 1, a + 1, -h)];
        }
        e
    })
}

// ---------------------------------------------------------------------------
// Program wrapper

#[derive(Debug, Clone)]
enum Layout {
    Scheduling,
    Power { x_idx: Vec<Vec<Option<usize>>>, y_idx: Vec<usize>, p_max: f64, pj_max: f64 },
    Source { stride: usize, scale_se: Vec<f64>, scale_su: Vec<Vec<f64>> },
    Jammer { stride: usize, scale_je: Vec<f64>, scale_ju: Vec<Vec<f64>> },
}

/// A block subproblem with the bookkeeping to read its solution.
pub struct BlockProgram {
    pub block: Block,
    pub program: ConvexProgram,
    num_users: usize,
    num_slots: usize,
    layout: Layout,
    terms: Arc<Vec<UserTerms>>,
}

impl std::fmt::Debug for BlockProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockProgram").field("block", &self.block).field("program", &self.program).finish()
    }
}

impl BlockProgram {
    fn eta(&self, k: usize) -> usize {
        self.program.dim - self.num_users + k
    }

    /// Surrogate secrecy rate of every `(user, slot)` with a nonzero schedule
    /// entry at `x`, as `(k, n, rate)`. Empty for the scheduling LP.
    pub fn slot_rates(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, terms) in self.terms.iter().enumerate() {
            for (n, _, t) in terms {
                out.push((k, *n, t.value(x)));
            }
        }
        out
    }

    /// Per-user surrogate average rate `(1/N) sum_n theta R` at `x`.
    pub fn surrogate_user_rates(&self, x: &[f64]) -> Vec<f64> {
        let inv_n = 1.0 / self.num_slots as f64;
        self.terms
            .iter()
            .map(|terms| terms.iter().map(|(_, th, t)| th * t.value(x)).sum::<f64>() * inv_n)
            .collect()
    }

    /// Write the block's variables from `x` into a copy of `base`.
    pub fn decode(&self, x: &[f64], base: &SolutionState) -> SolutionState {
        let mut s = base.clone();
        let (kk, nn) = (self.num_users, self.num_slots);
        match &self.layout {
            Layout::Scheduling => {
                for n in 0..nn {
                    for k in 0..kk {
                        let v = x[n * kk + k].clamp(0.0, 1.0);
                        s.schedule[k][n] = if v < SNAP {
                            0.0
                        } else if v > 1.0 - SNAP {
                            1.0
                        } else {
                            v
                        };
                    }
                }
            }
            Layout::Power { x_idx, y_idx, p_max, pj_max } => {
                for k in 0..kk {
                    for n in 0..nn {
                        if let Some(i) = x_idx[k][n] {
                            s.user_power[k][n] = (x[i] * p_max).clamp(0.0, *p_max);
                        }
                    }
                }
                for n in 0..nn {
                    s.jam_power[n] = (x[y_idx[n]] * pj_max).clamp(0.0, *pj_max);
                }
            }
            Layout::Source { stride, .. } => {
                for n in 0..nn {
                    s.traj_s[n] = Position2D::new(x[n * stride], x[n * stride + 1]);
                }
            }
            Layout::Jammer { stride, .. } => {
                for n in 0..nn {
                    s.traj_j[n] = Position2D::new(x[n * stride], x[n * stride + 1]);
                }
            }
        }
        s
    }

    /// Slack variables at `x` in physical units.
    pub fn slacks(&self, x: &[f64]) -> SlackVars {
        let eta = (0..self.num_users).map(|k| x[self.eta(k)]).collect();
        let nn = self.num_slots;
        match &self.layout {
            Layout::Source { stride, scale_se, scale_su } => SlackVars {
                d_se: (0..nn).map(|n| scale_se[n] * x[n * stride + 2]).collect(),
                d_su: scale_su
                    .iter()
                    .enumerate()
                    .map(|(r, sc)| (0..nn).map(|n| sc[n] * x[n * stride + 3 + r]).collect())
                    .collect(),
                eta,
                ..SlackVars::default()
            },
            Layout::Jammer { stride, scale_je, scale_ju } => SlackVars {
                d_je: (0..nn).map(|n| scale_je[n] * x[n * stride + 3]).collect(),
                d_ju: scale_ju
                    .iter()
                    .enumerate()
                    .map(|(r, sc)| (0..nn).map(|n| sc[n] * x[n * stride + 4 + r]).collect())
                    .collect(),
                eta,
                ..SlackVars::default()
            },
            _ => SlackVars { eta, ..SlackVars::default() },
        }
    }

    /// Set every `eta_k` in `x` to its surrogate rate floored at `floor`.
    fn fill_eta(&self, x: &mut [f64], floor: f64) {
        let rates = self.surrogate_user_rates(x);
        for (k, r) in rates.into_iter().enumerate() {
            let i = self.eta(k);
            x[i] = if r.is_finite() { r.max(floor) } else { floor };
        }
    }
}

// ---------------------------------------------------------------------------
// Scheduling

/// Normalized linear budget `sum_kn coeff[k][n] theta_k(n) + offset <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub coeff: Vec<Vec<f64>>,
    pub offset: f64,
}

/// Data of the scheduling problem with powers and positions fixed: the
/// unclamped rate of each `(user, slot)`, the per-user minimum and the
/// average-power and interference budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInstance {
    pub rates: Vec<Vec<f64>>,
    pub r_min: f64,
    pub budgets: Vec<Budget>,
}

impl SchedulingInstance {
    pub fn from_state(state: &SolutionState, sc: &ScenarioConfig) -> Self {
        let (kk, nn) = (state.num_users(), state.num_slots());
        let nf = nn as f64;
        let mut budgets = vec![Budget {
            coeff: (0..kk).map(|k| (0..nn).map(|n| state.user_power[k][n] / (nf * sc.p_s_ave)).collect()).collect(),
            offset: 0.0,
        }];
        for r in 0..sc.num_pus {
            let w = &sc.pu_positions[r];
            let cap = sc.interference_threshold[r];
            let h_su: Vec<f64> = state.traj_s.iter().map(|q| los_gain(q, w, sc.alt_s, sc.ref_gain)).collect();
            let jam: f64 = (0..nn)
                .map(|n| state.jam_power[n] * los_gain(&state.traj_j[n], w, sc.alt_j, sc.ref_gain))
                .sum();
            budgets.push(Budget {
                coeff: (0..kk)
                    .map(|k| (0..nn).map(|n| state.user_power[k][n] * h_su[n] / (nf * cap)).collect())
                    .collect(),
                offset: jam / (nf * cap),
            });
        }
        Self { rates: secrecy_matrix(state, sc), r_min: sc.r_min, budgets }
    }

    /// Instance with no power or interference budgets.
    pub fn unbudgeted(rates: Vec<Vec<f64>>, r_min: f64) -> Self {
        Self { rates, r_min, budgets: Vec::new() }
    }

    pub fn num_users(&self) -> usize {
        self.rates.len()
    }

    pub fn num_slots(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    /// Per-user average rate `(1/N) sum_n theta R` (unclamped).
    pub fn user_rates(&self, theta: &[Vec<f64>]) -> Vec<f64> {
        let nf = self.num_slots() as f64;
        self.rates
            .iter()
            .zip(theta)
            .map(|(r, t)| r.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / nf)
            .collect()
    }

    pub fn value(&self, theta: &[Vec<f64>]) -> f64 {
        self.user_rates(theta).iter().sum()
    }

    /// Largest violation of the slot sums, rate minimums and budgets.
    pub fn violation(&self, theta: &[Vec<f64>]) -> f64 {
        let (kk, nn) = (self.num_users(), self.num_slots());
        let mut v: f64 = 0.0;
        for n in 0..nn {
            v = v.max((0..kk).map(|k| theta[k][n]).sum::<f64>() - 1.0);
        }
        for r in self.user_rates(theta) {
            v = v.max(self.r_min - r);
        }
        for b in &self.budgets {
            let used: f64 = b.coeff.iter().zip(theta).flat_map(|(c, t)| c.iter().zip(t).map(|(a, b)| a * b)).sum();
            v = v.max(used + b.offset - 1.0);
        }
        v.max(0.0)
    }
}

/// LP relaxation of the scheduling block. Variables are `theta` slot-major
/// (`n * K + k`) followed by `eta`.
pub fn build_scheduling_lp_for(inst: &SchedulingInstance) -> BlockProgram {
    let (kk, nn) = (inst.num_users(), inst.num_slots());
    let nf = nn as f64;
    let dim = kk * nn + kk;
    let th = |k: usize, n: usize| n * kk + k;
    let eta = |k: usize| kk * nn + k;
    let mut p = ConvexProgram::new(dim);
    p.border = kk;
    p.objective = Box::new(Affine::new((0..kk).map(|k| (eta(k), 1.0)).collect(), 0.0));
    for k in 0..kk {
        let mut row: SparseVec = vec![(eta(k), 1.0)];
        for n in 0..nn {
            if inst.rates[k][n] != 0.0 {
                row.push((th(k, n), -inst.rates[k][n] / nf));
            }
        }
        p.convex_ineq.push(Box::new(Affine::new(row, 0.0)));
    }
    for n in 0..nn {
        p.convex_ineq.push(Box::new(Affine::new((0..kk).map(|k| (th(k, n), 1.0)).collect(), -1.0)));
    }
    for b in &inst.budgets {
        let mut row = SparseVec::new();
        for k in 0..kk {
            for n in 0..nn {
                if b.coeff[k][n] != 0.0 {
                    row.push((th(k, n), b.coeff[k][n]));
                }
            }
        }
        p.convex_ineq.push(Box::new(Affine::new(row, b.offset - 1.0)));
    }
    for k in 0..kk {
        for n in 0..nn {
            p.bounds[th(k, n)] = (0.0, 1.0);
        }
        p.bounds[eta(k)] = (inst.r_min, f64::INFINITY);
    }
    BlockProgram {
        block: Block::Scheduling,
        program: p,
        num_users: kk,
        num_slots: nn,
        layout: Layout::Scheduling,
        terms: Arc::new(vec![Vec::new(); kk]),
    }
}

/// Scheduling LP at the powers and positions of `state`.
pub fn build_scheduling_lp(state: &SolutionState, sc: &ScenarioConfig) -> BlockProgram {
    let mut b = build_scheduling_lp_for(&SchedulingInstance::from_state(state, sc));
    let kk = state.num_users();
    for n in 0..state.num_slots() {
        for k in 0..kk {
            b.program.start[n * kk + k] = state.schedule[k][n];
        }
    }
    b
}

/// Per slot, give the slot to the user with the largest relaxed entry when
/// that entry is at least half the largest column mass of the matrix and the
/// user's unclamped rate there is positive; ties go to the lower index.
pub fn round_schedule(relaxed: &[Vec<f64>], rates: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let kk = relaxed.len();
    let nn = relaxed.first().map_or(0, Vec::len);
    let max_mass = (0..nn).map(|n| (0..kk).map(|k| relaxed[k][n]).sum::<f64>()).fold(0.0, f64::max);
    let mut out = vec![vec![0.0; nn]; kk];
    for n in 0..nn {
        let mut best = 0;
        for k in 1..kk {
            if relaxed[k][n] > relaxed[best][n] {
                best = k;
            }
        }
        if kk > 0 && relaxed[best][n] > 0.0 && relaxed[best][n] >= 0.5 * max_mass && rates[best][n] > 0.0 {
            out[best][n] = 1.0;
        }
    }
    out
}

/// Binary schedule as one optional user per slot, with running totals so
/// single-slot moves are O(K + budgets).
struct Assignment<'a> {
    inst: &'a SchedulingInstance,
    who: Vec<Option<usize>>,
    rate_sum: Vec<f64>,
    used: Vec<f64>,
}

impl<'a> Assignment<'a> {
    fn new(inst: &'a SchedulingInstance, theta: &[Vec<f64>]) -> Self {
        let nn = inst.num_slots();
        let who: Vec<Option<usize>> = (0..nn).map(|n| (0..inst.num_users()).find(|&k| theta[k][n] > 0.5)).collect();
        let mut a = Self { inst, who: vec![None; nn], rate_sum: vec![0.0; inst.num_users()], used: vec![0.0; inst.budgets.len()] };
        for (n, w) in who.into_iter().enumerate() {
            a.set(n, w);
        }
        a
    }

    fn set(&mut self, n: usize, w: Option<usize>) {
        if let Some(k) = self.who[n] {
            self.rate_sum[k] -= self.inst.rates[k][n];
            for (u, b) in self.used.iter_mut().zip(&self.inst.budgets) {
                *u -= b.coeff[k][n];
            }
        }
        if let Some(k) = w {
            self.rate_sum[k] += self.inst.rates[k][n];
            for (u, b) in self.used.iter_mut().zip(&self.inst.budgets) {
                *u += b.coeff[k][n];
            }
        }
        self.who[n] = w;
    }

    /// `(total violation, value)`.
    fn score(&self) -> (f64, f64) {
        let nf = self.inst.num_slots() as f64;
        let mut viol = 0.0;
        for &s in &self.rate_sum {
            viol += (self.inst.r_min - s / nf).max(0.0);
        }
        for (u, b) in self.used.iter().zip(&self.inst.budgets) {
            viol += (u + b.offset - 1.0).max(0.0);
        }
        (viol, self.rate_sum.iter().sum::<f64>() / nf)
    }

    fn theta(&self) -> Vec<Vec<f64>> {
        let mut t = vec![vec![0.0; self.inst.num_slots()]; self.inst.num_users()];
        for (n, w) in self.who.iter().enumerate() {
            if let Some(k) = w {
                t[*k][n] = 1.0;
            }
        }
        t
    }

    /// Best single-slot move under `better`; applies it and returns true if any.
    fn best_move(&mut self, better: impl Fn((f64, f64), (f64, f64)) -> bool) -> bool {
        let kk = self.inst.num_users();
        let mut best: Option<(usize, Option<usize>, (f64, f64))> = None;
        let cur = self.score();
        for n in 0..self.inst.num_slots() {
            let old = self.who[n];
            for choice in std::iter::once(None).chain((0..kk).map(Some)) {
                if choice == old {
                    continue;
                }
                self.set(n, choice);
                let s = self.score();
                self.set(n, old);
                let reference = best.map_or(cur, |b| b.2);
                if better(s, reference) {
                    best = Some((n, choice, s));
                }
            }
        }
        match best {
            Some((n, w, _)) => {
                self.set(n, w);
                true
            }
            None => false,
        }
    }
}

/// Violation below this counts as feasible for binary schedules.
const SCHEDULE_FEAS_TOL: f64 = 1e-12;

/// Make a binary schedule feasible by greedy single-slot moves, then improve
/// it by 1-opt local search without leaving the feasible set. Returns `None`
/// when no feasible schedule is reached.
pub fn repair_schedule(inst: &SchedulingInstance, theta: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut a = Assignment::new(inst, theta);
    let cap = 4 * inst.num_slots() * (inst.num_users() + 1) + 16;
    let mut steps = 0;
    while a.score().0 > SCHEDULE_FEAS_TOL && steps < cap {
        let moved = a.best_move(|s, r| s.0 < r.0 - 1e-15 || (s.0 <= r.0 && s.1 > r.1 + 1e-12));
        if !moved {
            break;
        }
        steps += 1;
    }
    if a.score().0 > SCHEDULE_FEAS_TOL {
        return None;
    }
    steps = 0;
    while steps < cap {
        let moved = a.best_move(|s, r| s.0 <= SCHEDULE_FEAS_TOL && s.1 > r.1 + 1e-12);
        if !moved {
            break;
        }
        steps += 1;
    }
    Some(a.theta())
}

// ---------------------------------------------------------------------------
// Power

/// Which powers the power block may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerMask {
    pub users: bool,
    pub jammer: bool,
}

impl PowerMask {
    pub const ALL: Self = Self { users: true, jammer: true };
}

/// Power block around `expansion` with the schedule and trajectories of `state`.
pub fn build_power_program(state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> BlockProgram {
    build_power_program_masked(state, sc, expansion, PowerMask::ALL)
}

pub fn build_power_program_masked(
    state: &SolutionState,
    sc: &ScenarioConfig,
    expansion: &ExpansionPoint,
    mask: PowerMask,
) -> BlockProgram {
    let (kk, nn) = (state.num_users(), state.num_slots());
    let nf = nn as f64;
    let base = expansion.apply(state);
    let mut x_idx = vec![vec![None; nn]; kk];
    let mut y_idx = vec![0; nn];
    let mut dim = 0;
    for n in 0..nn {
        for k in 0..kk {
            if state.schedule[k][n] > 0.0 {
                x_idx[k][n] = Some(dim);
                dim += 1;
            }
        }
        y_idx[n] = dim;
        dim += 1;
    }
    let body = dim;
    dim += kk;
    let p_max = sc.p_s_max;
    let pj_max = sc.p_j_max;
    let pj_scale = if pj_max > 0.0 { pj_max } else { 1.0 };
    let noise = sc.noise_power;

    let mut terms: Vec<UserTerms> = vec![Vec::new(); kk];
    for k in 0..kk {
        for n in 0..nn {
            let Some(xi) = x_idx[k][n] else { continue };
            let g = slot_gains(&base, sc, k, n);
            terms[k].push((
                n,
                state.schedule[k][n],
                RateTerm::Power {
                    x: xi,
                    y: y_idx[n],
                    a: p_max * g.sd / noise,
                    b: pj_max * g.je / noise,
                    c: p_max * g.se / noise,
                    xm: expansion.user_power[k][n] / p_max,
                    ym: expansion.jam_power[n] / pj_scale,
                },
            ));
        }
    }
    let terms = Arc::new(terms);

    let mut p = ConvexProgram::new(dim);
    p.border = kk;
    p.objective = Box::new(Affine::new((0..kk).map(|k| (body + k, 1.0)).collect(), 0.0));
    for k in 0..kk {
        p.convex_ineq.push(rate_row(body + k, terms.clone(), k, nn));
    }
    // average powers
    let mut avg = SparseVec::new();
    for k in 0..kk {
        for n in 0..nn {
            if let Some(i) = x_idx[k][n] {
                avg.push((i, state.schedule[k][n] * p_max / (nf * sc.p_s_ave)));
            }
        }
    }
    p.convex_ineq.push(Box::new(Affine::new(avg, -1.0)));
    if pj_max > 0.0 && sc.p_j_ave > 0.0 {
        let row = (0..nn).map(|n| (y_idx[n], pj_max / (nf * sc.p_j_ave))).collect();
        p.convex_ineq.push(Box::new(Affine::new(row, -1.0)));
    }
    // interference
    for r in 0..sc.num_pus {
        let w = &sc.pu_positions[r];
        let cap = sc.interference_threshold[r];
        let mut row = SparseVec::new();
        for n in 0..nn {
            let h_su = los_gain(&state.traj_s[n], w, sc.alt_s, sc.ref_gain);
            let h_ju = los_gain(&state.traj_j[n], w, sc.alt_j, sc.ref_gain);
            for k in 0..kk {
                if let Some(i) = x_idx[k][n] {
                    row.push((i, state.schedule[k][n] * p_max * h_su / (nf * cap)));
                }
            }
            if pj_max > 0.0 {
                row.push((y_idx[n], pj_max * h_ju / (nf * cap)));
            }
        }
        p.convex_ineq.push(Box::new(Affine::new(row, -1.0)));
    }

    for k in 0..kk {
        for n in 0..nn {
            if let Some(i) = x_idx[k][n] {
                let v = (state.user_power[k][n] / p_max).clamp(0.0, 1.0);
                p.start[i] = v;
                p.bounds[i] = if mask.users { (0.0, 1.0) } else { (v, v) };
            }
        }
    }
    for n in 0..nn {
        let v = if pj_max > 0.0 { (state.jam_power[n] / pj_max).clamp(0.0, 1.0) } else { 0.0 };
        p.start[y_idx[n]] = v;
        p.bounds[y_idx[n]] = if mask.jammer && pj_max > 0.0 { (0.0, 1.0) } else { (v, v) };
    }
    for k in 0..kk {
        p.bounds[body + k] = (sc.r_min, f64::INFINITY);
    }
    let mut bp = BlockProgram {
        block: Block::Power,
        program: p,
        num_users: kk,
        num_slots: nn,
        layout: Layout::Power { x_idx, y_idx, p_max, pj_max: pj_scale },
        terms,
    };
    let mut start = std::mem::take(&mut bp.program.start);
    bp.fill_eta(&mut start, sc.r_min);
    bp.program.start = start;
    bp
}

// ---------------------------------------------------------------------------
// Trajectories

/// Tangent of `max(|q - c| - r, 0)^2` at `q^m`: `(t0, gradient)`.
fn gap_sq_tangent(qm: &Position2D, c: &Position2D, r: f64) -> (f64, (f64, f64)) {
    let a = qm.dist(c);
    let gap = (a - r).max(0.0);
    if a == 0.0 || gap == 0.0 {
        return (0.0, (0.0, 0.0));
    }
    let f = 2.0 * gap / a;
    (gap * gap, (f * (qm.x - c.x), f * (qm.y - c.y)))
}

/// Tangent of `(|q - c| + r)^2` at `q^m`. At the center the zero-slope
/// tangent `r^2` is a valid under-estimator.
fn far_sq_tangent(qm: &Position2D, c: &Position2D, r: f64) -> (f64, (f64, f64)) {
    let a = qm.dist(c);
    if a == 0.0 {
        return (r * r, (0.0, 0.0));
    }
    let f = 2.0 * (a + r) / a;
    ((a + r) * (a + r), (f * (qm.x - c.x), f * (qm.y - c.y)))
}

/// Tangent of `|q - c|^2` at `q^m`.
fn sq_tangent(qm: &Position2D, c: &Position2D) -> (f64, (f64, f64)) {
    (qm.dist2(c), (2.0 * (qm.x - c.x), 2.0 * (qm.y - c.y)))
}

fn tangent_at(t: &(f64, (f64, f64)), qm: &Position2D, q: &Position2D) -> f64 {
    t.0 + t.1 .0 * (q.x - qm.x) + t.1 .1 * (q.y - qm.y)
}

/// Endpoint, speed and position bookkeeping shared by both trajectory blocks.
fn add_motion(p: &mut ConvexProgram, stride: usize, nn: usize, start: &Position2D, end: &Position2D, step: f64) {
    p.bounds[0] = (start.x, start.x);
    p.bounds[1] = (start.y, start.y);
    let last = (nn - 1) * stride;
    p.bounds[last] = (end.x, end.x);
    p.bounds[last + 1] = (end.y, end.y);
    for n in 0..nn.saturating_sub(1) {
        p.convex_ineq.push(speed_row(n * stride, (n + 1) * stride, step));
    }
}

/// Source-trajectory block. Per slot the variables are
/// `[q_x, q_y, z_se, z_su_1..z_su_R]`, followed by `eta`.
pub fn build_s_trajectory_program(state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> BlockProgram {
    let (kk, nn, rr) = (state.num_users(), state.num_slots(), sc.num_pus);
    let nf = nn as f64;
    let stride = 3 + rr;
    let dim = nn * stride + kk;
    let h2 = sc.alt_s * sc.alt_s;
    let noise = sc.noise_power;
    let base = expansion.apply(state);
    let qm = &expansion.traj_s;

    let t_se: Vec<_> = qm.iter().map(|q| gap_sq_tangent(q, &sc.eve_center, sc.eve_radius)).collect();
    let t_su: Vec<Vec<_>> = (0..rr).map(|r| qm.iter().map(|q| sq_tangent(q, &sc.pu_positions[r])).collect()).collect();
    let scale_se: Vec<f64> = t_se.iter().map(|t| t.0 + h2).collect();
    let scale_su: Vec<Vec<f64>> = t_su.iter().map(|row| row.iter().map(|t| t.0 + h2).collect()).collect();
    let mass: Vec<f64> = (0..nn).map(|n| state.slot_power(n)).collect();

    let mut terms: Vec<UserTerms> = vec![Vec::new(); kk];
    let mut se_used = vec![false; nn];
    for k in 0..kk {
        for n in 0..nn {
            let theta = state.schedule[k][n];
            if theta <= 0.0 {
                continue;
            }
            let pk = state.user_power[k][n];
            if pk <= 0.0 {
                terms[k].push((n, theta, RateTerm::Const(0.0)));
                continue;
            }
            let w = sc.user_positions[k];
            let (d, l) = s_rate_bound_coeffs(&qm[n], &w, pk / noise, sc.alt_s, sc.ref_gain);
            let h_je = worst_case_gain_je(&base.traj_j[n], &sc.eve_center, sc.eve_radius, sc.alt_j, sc.ref_gain);
            let t = pk / (base.jam_power[n] * h_je + noise);
            se_used[n] = true;
            terms[k].push((
                n,
                theta,
                RateTerm::Source {
                    qx: n * stride,
                    z: n * stride + 2,
                    w,
                    l,
                    d,
                    s_m: qm[n].dist2(&w),
                    eve: t * sc.ref_gain,
                    scale: scale_se[n],
                    h2,
                },
            ));
        }
    }
    let terms = Arc::new(terms);

    let mut p = ConvexProgram::new(dim);
    p.border = kk;
    let eta0 = nn * stride;
    p.objective = Box::new(Affine::new((0..kk).map(|k| (eta0 + k, 1.0)).collect(), 0.0));
    for k in 0..kk {
        p.convex_ineq.push(rate_row(eta0 + k, terms.clone(), k, nn));
    }
    // interference through d_su
    for r in 0..rr {
        let w = &sc.pu_positions[r];
        let cap = sc.interference_threshold[r];
        let jam: f64 = (0..nn)
            .map(|n| state.jam_power[n] * los_gain(&state.traj_j[n], w, sc.alt_j, sc.ref_gain))
            .sum();
        let slots: Vec<(usize, f64, f64)> = (0..nn)
            .filter(|&n| mass[n] > 0.0)
            .map(|n| (n * stride + 3 + r, mass[n] * sc.ref_gain / (nf * cap), scale_su[r][n]))
            .collect();
        let offset = jam / (nf * cap) - 1.0;
        p.convex_ineq.push(smooth(move |x, hess| {
            let mut e = Eval { value: offset, ..Eval::default() };
            for &(z, c, s) in &slots {
                let u = s * x[z] + h2;
                if u <= 0.0 {
                    e.value = f64::NAN;
                    return e;
                }
                e.value += c / u;
                e.grad.push((z, -c * s / (u * u)));
                if hess {
                    e.hess.push((z, z, 2.0 * c * s * s / (u * u * u)));
                }
            }
            e
        }));
    }
    // slack tangents, eavesdropper disc
    for n in 0..nn {
        let qx = n * stride;
        let z = qx + 2;
        if se_used[n] {
            p.convex_ineq.push(tangent_row(z, qx, scale_se[n], t_se[n].0, t_se[n].1, &qm[n]));
            p.bounds[z] = (0.0, f64::INFINITY);
        } else {
            p.bounds[z] = (0.0, 0.0);
        }
        for r in 0..rr {
            let zr = qx + 3 + r;
            if mass[n] > 0.0 {
                p.convex_ineq.push(tangent_row(zr, qx, scale_su[r][n], t_su[r][n].0, t_su[r][n].1, &qm[n]));
                p.bounds[zr] = (0.0, f64::INFINITY);
            } else {
                p.bounds[zr] = (0.0, 0.0);
            }
        }
        let a = qm[n].dist(&sc.eve_center);
        if sc.eve_radius > 0.0 && a > 0.0 {
            // stay on the far side of the disc's tangent line facing q^m
            let (ux, uy) = ((qm[n].x - sc.eve_center.x) / a, (qm[n].y - sc.eve_center.y) / a);
            let c = sc.eve_center;
            p.convex_ineq.push(Box::new(Affine::new(
                vec![(qx, -ux), (qx + 1, -uy)],
                sc.eve_radius + ux * c.x + uy * c.y,
            )));
        }
    }
    add_motion(&mut p, stride, nn, &sc.start_s, &sc.end_s, sc.max_step_s());
    for k in 0..kk {
        p.bounds[eta0 + k] = (sc.r_min, f64::INFINITY);
    }

    let mut bp = BlockProgram {
        block: Block::SourceTrajectory,
        program: p,
        num_users: kk,
        num_slots: nn,
        layout: Layout::Source { stride, scale_se, scale_su },
        terms,
    };
    bp.program.start = bp.encode_source(state, sc, expansion);
    bp
}

/// Jammer-trajectory block. Per slot the variables are
/// `[q_x, q_y, rho, z_je, z_ju_1..z_ju_R]`, followed by `eta`; `rho` bounds
/// the distance to the disc center from above.
pub fn build_j_trajectory_program(state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> BlockProgram {
    let (kk, nn, rr) = (state.num_users(), state.num_slots(), sc.num_pus);
    let nf = nn as f64;
    let stride = 4 + rr;
    let dim = nn * stride + kk;
    let h2 = sc.alt_j * sc.alt_j;
    let noise = sc.noise_power;
    let re = sc.eve_radius;
    let base = expansion.apply(state);
    let qm = &expansion.traj_j;

    let t_je: Vec<_> = qm.iter().map(|q| far_sq_tangent(q, &sc.eve_center, re)).collect();
    let t_ju: Vec<Vec<_>> = (0..rr).map(|r| qm.iter().map(|q| sq_tangent(q, &sc.pu_positions[r])).collect()).collect();
    let scale_je: Vec<f64> = t_je.iter().map(|t| t.0 + h2).collect();
    let scale_ju: Vec<Vec<f64>> = t_ju.iter().map(|row| row.iter().map(|t| t.0 + h2).collect()).collect();
    let pj = &state.jam_power;

    let mut terms: Vec<UserTerms> = vec![Vec::new(); kk];
    let mut je_used = vec![false; nn];
    for k in 0..kk {
        for n in 0..nn {
            let theta = state.schedule[k][n];
            if theta <= 0.0 {
                continue;
            }
            let pk = state.user_power[k][n];
            let g = slot_gains(&base, sc, k, n);
            let user = rate_user(pk, g.sd, noise);
            if pk <= 0.0 {
                terms[k].push((n, theta, RateTerm::Const(0.0)));
                continue;
            }
            let a = qm[n].dist(&sc.eve_center);
            let s_m = (a + re) * (a + re);
            let b = pj[n] * sc.ref_gain / noise;
            let (m, _) = j_rate_bound_terms(&qm[n], &sc.eve_center, re, pj[n], sc.alt_j, sc.ref_gain, noise);
            let slope = j_composite_slope(m, pj[n], s_m, sc.alt_j, sc.ref_gain);
            if b > 0.0 {
                je_used[n] = true;
            }
            terms[k].push((
                n,
                theta,
                RateTerm::Jammer {
                    rho: n * stride + 2,
                    z: n * stride + 3,
                    user,
                    e: pk * g.se / noise,
                    b,
                    scale: scale_je[n],
                    h2,
                    phi_m: (b / (s_m + h2)).ln_1p() / LN_2,
                    slope,
                    s_m,
                    r: re,
                },
            ));
        }
    }
    let terms = Arc::new(terms);

    let mut p = ConvexProgram::new(dim);
    p.border = kk;
    let eta0 = nn * stride;
    p.objective = Box::new(Affine::new((0..kk).map(|k| (eta0 + k, 1.0)).collect(), 0.0));
    for k in 0..kk {
        p.convex_ineq.push(rate_row(eta0 + k, terms.clone(), k, nn));
    }
    for r in 0..rr {
        let w = &sc.pu_positions[r];
        let cap = sc.interference_threshold[r];
        let src: f64 = (0..nn)
            .map(|n| state.slot_power(n) * los_gain(&state.traj_s[n], w, sc.alt_s, sc.ref_gain))
            .sum();
        let slots: Vec<(usize, f64, f64)> = (0..nn)
            .filter(|&n| pj[n] > 0.0)
            .map(|n| (n * stride + 4 + r, pj[n] * sc.ref_gain / (nf * cap), scale_ju[r][n]))
            .collect();
        let offset = src / (nf * cap) - 1.0;
        p.convex_ineq.push(smooth(move |x, hess| {
            let mut e = Eval { value: offset, ..Eval::default() };
            for &(z, c, s) in &slots {
                let u = s * x[z] + h2;
                if u <= 0.0 {
                    e.value = f64::NAN;
                    return e;
                }
                e.value += c / u;
                e.grad.push((z, -c * s / (u * u)));
                if hess {
                    e.hess.push((z, z, 2.0 * c * s * s / (u * u * u)));
                }
            }
            e
        }));
    }
    let c = sc.eve_center;
    for n in 0..nn {
        let qx = n * stride;
        let rho = qx + 2;
        let z = qx + 3;
        if je_used[n] {
            let scale = qm[n].dist(&c).max(1.0);
            // |q - c|^2 / rho - rho <= 0, normalized by the expansion distance
            p.convex_ineq.push(smooth(move |x, hess| {
                let (vx, vy, r) = (x[qx] - c.x, x[qx + 1] - c.y, x[rho]);
                let v2 = vx * vx + vy * vy;
                let mut e = Eval {
                    value: (v2 / r - r) / scale,
                    grad: vec![(qx, 2.0 * vx / (r * scale)), (qx + 1, 2.0 * vy / (r * scale)), (rho, (-v2 / (r * r) - 1.0) / scale)],
                    hess: Vec::new(),
                };
                if hess {
                    let s = scale;
                    e.hess = vec![
                        (qx, qx, 2.0 / (r * s)),
                        (qx + 1, qx + 1, 2.0 / (r * s)),
                        (rho, qx, -2.0 * vx / (r * r * s)),
                        (rho, qx + 1, -2.0 * vy / (r * r * s)),
                        (rho, rho, 2.0 * v2 / (r * r * r * s)),
                    ];
                }
                e
            }));
            p.bounds[rho] = (RHO_FLOOR, f64::INFINITY);
            p.convex_ineq.push(tangent_row(z, qx, scale_je[n], t_je[n].0, t_je[n].1, &qm[n]));
            p.bounds[z] = (re * re / scale_je[n], f64::INFINITY);
        } else {
            let r0 = qm[n].dist(&c).max(RHO_FLOOR);
            p.bounds[rho] = (r0, r0);
            p.bounds[z] = (1.0, 1.0);
        }
        for r in 0..rr {
            let zr = qx + 4 + r;
            if pj[n] > 0.0 {
                p.convex_ineq.push(tangent_row(zr, qx, scale_ju[r][n], t_ju[r][n].0, t_ju[r][n].1, &qm[n]));
                p.bounds[zr] = (0.0, f64::INFINITY);
            } else {
                p.bounds[zr] = (0.0, 0.0);
            }
        }
    }
    add_motion(&mut p, stride, nn, &sc.start_j, &sc.end_j, sc.max_step_j());
    for k in 0..kk {
        p.bounds[eta0 + k] = (sc.r_min, f64::INFINITY);
    }

    let mut bp = BlockProgram {
        block: Block::JammerTrajectory,
        program: p,
        num_users: kk,
        num_slots: nn,
        layout: Layout::Jammer { stride, scale_je, scale_ju },
        terms,
    };
    bp.program.start = bp.encode_jammer(state, sc, expansion);
    bp
}

impl BlockProgram {
    /// Variables for the trajectory in `state`: slacks at their tangent
    /// bounds (the true values at the expansion) and `eta` at the surrogate
    /// rates floored at `R_min`.
    pub fn encode(&self, state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> Vec<f64> {
        match self.layout {
            Layout::Source { .. } => self.encode_source(state, sc, expansion),
            Layout::Jammer { .. } => self.encode_jammer(state, sc, expansion),
            Layout::Power { .. } | Layout::Scheduling => {
                let mut x = self.program.start.clone();
                if let Layout::Power { x_idx, y_idx, p_max, pj_max } = &self.layout {
                    for (k, row) in x_idx.iter().enumerate() {
                        for (n, i) in row.iter().enumerate() {
                            if let Some(i) = i {
                                x[*i] = state.user_power[k][n] / p_max;
                            }
                        }
                    }
                    for (n, &i) in y_idx.iter().enumerate() {
                        x[i] = state.jam_power[n] / pj_max;
                    }
                    self.fill_eta(&mut x, sc.r_min);
                }
                x
            }
        }
    }

    fn encode_source(&self, state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> Vec<f64> {
        let Layout::Source { stride, scale_se, scale_su } = &self.layout else { unreachable!() };
        let mut x = vec![0.0; self.program.dim];
        for (n, q) in state.traj_s.iter().enumerate() {
            let qm = &expansion.traj_s[n];
            let b = n * stride;
            x[b] = q.x;
            x[b + 1] = q.y;
            let t = gap_sq_tangent(qm, &sc.eve_center, sc.eve_radius);
            x[b + 2] = if self.program.bounds[b + 2].1 == 0.0 { 0.0 } else { tangent_at(&t, qm, q) / scale_se[n] };
            for r in 0..sc.num_pus {
                let t = sq_tangent(qm, &sc.pu_positions[r]);
                x[b + 3 + r] =
                    if self.program.bounds[b + 3 + r].1 == 0.0 { 0.0 } else { tangent_at(&t, qm, q) / scale_su[r][n] };
            }
        }
        self.fill_eta(&mut x, sc.r_min);
        x
    }

    fn encode_jammer(&self, state: &SolutionState, sc: &ScenarioConfig, expansion: &ExpansionPoint) -> Vec<f64> {
        let Layout::Jammer { stride, scale_je, scale_ju } = &self.layout else { unreachable!() };
        let mut x = vec![0.0; self.program.dim];
        for (n, q) in state.traj_j.iter().enumerate() {
            let qm = &expansion.traj_j[n];
            let b = n * stride;
            x[b] = q.x;
            x[b + 1] = q.y;
            let (lo, hi) = self.program.bounds[b + 2];
            x[b + 2] = if lo == hi { lo } else { q.dist(&sc.eve_center).max(RHO_FLOOR) };
            let (lo, hi) = self.program.bounds[b + 3];
            let t = far_sq_tangent(qm, &sc.eve_center, sc.eve_radius);
            x[b + 3] = if lo == hi { lo } else { tangent_at(&t, qm, q) / scale_je[n] };
            for r in 0..sc.num_pus {
                let t = sq_tangent(qm, &sc.pu_positions[r]);
                x[b + 4 + r] =
                    if self.program.bounds[b + 4 + r].1 == 0.0 { 0.0 } else { tangent_at(&t, qm, q) / scale_ju[r][n] };
            }
        }
        self.fill_eta(&mut x, sc.r_min);
        x
    }
}

//! Brute-force and numerical-differentiation references for testing. Nothing
//! in the optimizer depends on this module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{los_gain, Position2D};
use crate::convex_core::SmoothFn;
use crate::rates::SolutionState;
use crate::scenario::ScenarioConfig;
use crate::subproblems::Budget;

/// Largest number of schedules the exhaustive oracle will enumerate.
pub const MAX_SCHEDULES: u64 = 1 << 22;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large: {0} candidates")]
    TooLarge(u64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no feasible candidate")]
    Empty,
}

/// Uniform grid on `[lower, upper]` with `count` points including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, count: usize) -> Result<Self, OracleError> {
        if count < 2 {
            return Err(OracleError::InvalidGrid("count must be at least 2".into()));
        }
        if !(lower < upper) {
            return Err(OracleError::InvalidGrid(format!("lower {lower} must be below upper {upper}")));
        }
        Ok(Self { lower, upper, count })
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            return self.upper;
        }
        self.lower + (self.upper - self.lower) * i as f64 / (self.count - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.point(i))
    }
}

/// Largest componentwise error between the analytic gradient of `f` and a
/// central difference with step `step * max(1, |x_i|)`. Errors are relative
/// to `max(1, |g_i|)`.
pub fn fd_gradient_check<F>(f: F, x: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, grad) = f(x);
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp).0;
        xp[i] = x[i] - h;
        let fm = f(&xp).0;
        xp[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
    }
    worst
}

/// [`fd_gradient_check`] for a [`SmoothFn`] with a sparse gradient.
pub fn fd_gradient_check_fn(f: &dyn SmoothFn, x: &[f64], step: f64) -> f64 {
    fd_gradient_check(
        |y| {
            let e = f.eval(y, false);
            let mut g = vec![0.0; y.len()];
            for (i, v) in e.grad {
                g[i] += v;
            }
            (e.value, g)
        },
        x,
        step,
    )
}

/// Best binary schedule by enumeration: every slot gets one user or none,
/// each user's average rate must reach `r_min` and every budget
/// `sum coeff theta + offset <= 1` must hold. The value is the sum of
/// per-user average rates (unclamped).
pub fn exhaustive_schedule_oracle(
    rates: &[Vec<f64>],
    r_min: f64,
    budgets: Option<&[Budget]>,
) -> Result<(f64, Vec<Vec<f64>>), OracleError> {
    let kk = rates.len();
    let nn = rates.first().map_or(0, Vec::len);
    let base = kk as u64 + 1;
    let total = (0..nn).try_fold(1u64, |acc, _| acc.checked_mul(base)).unwrap_or(u64::MAX);
    if total > MAX_SCHEDULES {
        return Err(OracleError::TooLarge(total));
    }
    let budgets = budgets.unwrap_or(&[]);
    let nf = nn as f64;
    let mut choice = vec![0usize; nn];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mut code in 0..total {
        for c in choice.iter_mut() {
            *c = (code % base) as usize;
            code /= base;
        }
        let mut per_user = vec![0.0; kk];
        for (n, &c) in choice.iter().enumerate() {
            if c > 0 {
                per_user[c - 1] += rates[c - 1][n];
            }
        }
        if per_user.iter().any(|&s| s / nf < r_min) {
            continue;
        }
        let within = budgets.iter().all(|b| {
            let used: f64 =
                choice.iter().enumerate().filter(|(_, &c)| c > 0).map(|(n, &c)| b.coeff[c - 1][n]).sum();
            used + b.offset <= 1.0
        });
        if !within {
            continue;
        }
        let value = per_user.iter().sum::<f64>() / nf;
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, choice.clone()));
        }
    }
    let (value, choice) = best.ok_or(OracleError::Empty)?;
    let mut theta = vec![vec![0.0; nn]; kk];
    for (n, &c) in choice.iter().enumerate() {
        if c > 0 {
            theta[c - 1][n] = 1.0;
        }
    }
    Ok((value, theta))
}

/// One slot with fixed gains: `p_k` in `[0, p_max]`, `p_j` in `[0, pj_max]`
/// and linear caps `a_k p_k + a_j p_j <= limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInstance {
    pub gain_sd: f64,
    pub gain_se: f64,
    pub gain_je: f64,
    pub noise: f64,
    pub p_max: f64,
    pub pj_max: f64,
    pub caps: Vec<(f64, f64, f64)>,
}

impl SlotInstance {
    /// Unclamped secrecy rate, evaluated from scratch.
    pub fn secrecy(&self, p_k: f64, p_j: f64) -> f64 {
        let legit = (1.0 + p_k * self.gain_sd / self.noise).log2();
        let eve = (1.0 + p_k * self.gain_se / (p_j * self.gain_je + self.noise)).log2();
        legit - eve
    }

    pub fn feasible(&self, p_k: f64, p_j: f64) -> bool {
        (0.0..=self.p_max).contains(&p_k)
            && (0.0..=self.pj_max).contains(&p_j)
            && self.caps.iter().all(|&(a, b, l)| a * p_k + b * p_j <= l * (1.0 + 1e-12))
    }

    /// Largest feasible `p_k` at this `p_j`, if any.
    fn max_pk(&self, p_j: f64) -> Option<f64> {
        let mut hi = self.p_max;
        for &(a, b, l) in &self.caps {
            if a > 0.0 {
                hi = hi.min((l - b * p_j) / a);
            } else if b * p_j > l {
                return None;
            }
        }
        (hi >= 0.0).then_some(hi)
    }

    fn max_pj(&self, p_k: f64) -> Option<f64> {
        let mut hi = self.pj_max;
        for &(a, b, l) in &self.caps {
            if b > 0.0 {
                hi = hi.min((l - a * p_k) / b);
            } else if a * p_k > l {
                return None;
            }
        }
        (hi >= 0.0).then_some(hi)
    }
}

/// Best `(p_k, p_j, rate)` over the grid. Besides the grid nodes, every grid
/// line is also evaluated where it meets the cap boundary, so optima on a
/// slanted cap are found exactly along one coordinate.
pub fn grid_power_oracle(inst: &SlotInstance, grid: (&GridSpec, &GridSpec)) -> Result<(f64, f64, f64), OracleError> {
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |pk: f64, pj: f64| {
        if inst.feasible(pk, pj) {
            let v = inst.secrecy(pk, pj);
            if best.map_or(true, |b| v > b.2) {
                best = Some((pk, pj, v));
            }
        }
    };
    for pk in grid.0.points() {
        for pj in grid.1.points() {
            consider(pk, pj);
        }
        if let Some(pj) = inst.max_pj(pk) {
            consider(pk, pj);
        }
    }
    for pj in grid.1.points() {
        if let Some(pk) = inst.max_pk(pj) {
            consider(pk, pj);
        }
    }
    best.ok_or(OracleError::Empty)
}

/// Sample eavesdropper positions uniformly in the uncertainty disc and return
/// the smallest gap between the true secrecy rate of a scheduled
/// `(user, slot)` and its worst-case value used by the optimizer. Never
/// negative when the worst-case model is sound.
pub fn monte_carlo_eve_check(state: &SolutionState, sc: &ScenarioConfig, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = sc.noise_power;
    let bound = crate::rates::secrecy_matrix(state, sc);
    let mut worst = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let radius = sc.eve_radius * rng.gen::<f64>().sqrt();
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let w = Position2D::new(sc.eve_center.x + radius * angle.cos(), sc.eve_center.y + radius * angle.sin());
        for n in 0..state.num_slots() {
            let h_se = los_gain(&state.traj_s[n], &w, sc.alt_s, sc.ref_gain);
            let h_je = los_gain(&state.traj_j[n], &w, sc.alt_j, sc.ref_gain);
            for k in 0..state.num_users() {
                if state.schedule[k][n] <= 0.0 {
                    continue;
                }
                let p = state.user_power[k][n];
                let h_sd = los_gain(&state.traj_s[n], &sc.user_positions[k], sc.alt_s, sc.ref_gain);
                let legit = (p * h_sd / noise).ln_1p() / std::f64::consts::LN_2;
                let eve = (p * h_se / (state.jam_power[n] * h_je + noise)).ln_1p() / std::f64::consts::LN_2;
                worst = worst.min(legit - eve - bound[k][n]);
            }
        }
    }
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let f = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>(), x.iter().map(|v| 2.0 * v).collect());
        // central differences are exact on quadratics, so only rounding remains
        assert!(fd_gradient_check(f, &[3.0, -1.5, 40.0], 1e-4) <= 1e-9);
    }

    #[test]
    fn enumeration_examples() {
        let (v, th) = exhaustive_schedule_oracle(&[vec![3.0, 1.0], vec![2.0, 2.0]], 0.5, None).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        assert_eq!(th, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (v, th) = exhaustive_schedule_oracle(&[vec![-1.0, -2.0], vec![-0.5, -3.0]], 0.0, None).unwrap();
        assert_eq!(v, 0.0);
        assert!(th.iter().flatten().all(|&t| t == 0.0));
        assert_eq!(exhaustive_schedule_oracle(&[vec![2.0]], 0.0, None).unwrap().0, 2.0);
        assert!(matches!(exhaustive_schedule_oracle(&[vec![1.0; 30]], 0.0, None), Err(OracleError::TooLarge(_))));
    }

    #[test]
    fn grid_rejects_degenerate_specs() {
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        assert!(GridSpec::new(1.0, 1.0, 5).is_err());
        let g = GridSpec::new(0.0, 1.0, 3).unwrap();
        assert_eq!(g.points().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_oracle_limits() {
        let g = GridSpec::new(0.0, 1.0, 11).unwrap();
        let mut inst =
            SlotInstance { gain_sd: 1.0, gain_se: 0.0, gain_je: 1.0, noise: 0.1, p_max: 1.0, pj_max: 1.0, caps: vec![(1.0, 0.0, 0.73)] };
        let (pk, _, _) = grid_power_oracle(&inst, (&g, &g)).unwrap();
        assert!((pk - 0.73).abs() < 1e-12);
        inst.gain_se = 0.5;
        inst.gain_je = 0.0;
        inst.caps = vec![(1.0, 1.0, 2.0)];
        let (_, pj, _) = grid_power_oracle(&inst, (&g, &g)).unwrap();
        // jamming is useless here; the first maximizer found has p_j = 0
        assert_eq!(pj, 0.0);
    }
}

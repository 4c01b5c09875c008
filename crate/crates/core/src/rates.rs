//! Achievable and secrecy rates, PU interference, the sum average secrecy
//! rate objective and full-constraint feasibility of a candidate solution.
//!
//! Rates are bits/s/Hz (log base 2, unit bandwidth). Eavesdropper terms always
//! use the worst-case bounds of the uncertainty disc.

use serde::{Deserialize, Serialize};

use crate::channel::{los_gain, worst_case_gain_je, worst_case_gain_se_saturating, Position2D};
use crate::scenario::ScenarioConfig;

/// Optimization variables at one iterate. Matrices are indexed `[user][slot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionState {
    pub schedule: Vec<Vec<f64>>,
    pub user_power: Vec<Vec<f64>>,
    pub jam_power: Vec<f64>,
    pub traj_s: Vec<Position2D>,
    pub traj_j: Vec<Position2D>,
}

impl SolutionState {
    pub fn num_users(&self) -> usize {
        self.schedule.len()
    }

    pub fn num_slots(&self) -> usize {
        self.jam_power.len()
    }

    /// Column sum of the schedule at slot `n`.
    pub fn slot_mass(&self, n: usize) -> f64 {
        self.schedule.iter().map(|row| row[n]).sum()
    }

    /// `sum_k theta_k(n) P_k(n)`: power S spends in slot `n`.
    pub fn slot_power(&self, n: usize) -> f64 {
        self.schedule
            .iter()
            .zip(&self.user_power)
            .map(|(t, p)| t[n] * p[n])
            .sum()
    }

    /// Index of the active user in slot `n` for a binary schedule.
    pub fn active_user(&self, n: usize) -> Option<usize> {
        (0..self.num_users()).find(|&k| self.schedule[k][n] > 0.5)
    }

    pub fn is_binary(&self) -> bool {
        self.schedule.iter().flatten().all(|&t| t == 0.0 || t == 1.0)
    }
}

/// Per-slot gains seen by one scheduled user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotGains {
    pub sd: f64,
    pub se: f64,
    pub je: f64,
}

pub fn rate_user(p_k: f64, gain_sd: f64, noise: f64) -> f64 {
    (p_k * gain_sd / noise).ln_1p() / std::f64::consts::LN_2
}

pub fn rate_eve(p_k: f64, gain_se: f64, p_j: f64, gain_je: f64, noise: f64) -> f64 {
    (p_k * gain_se / (p_j * gain_je + noise)).ln_1p() / std::f64::consts::LN_2
}

/// Legitimate minus eavesdropper rate, without the `[.]^+` clamp.
pub fn secrecy_rate_unclamped(p_k: f64, gains: SlotGains, p_j: f64, noise: f64) -> f64 {
    rate_user(p_k, gains.sd, noise) - rate_eve(p_k, gains.se, p_j, gains.je, noise)
}

/// Per-slot secrecy rate `[R_D - R_E]^+`.
pub fn secrecy_rate_slot(p_k: f64, gains: SlotGains, p_j: f64, noise: f64) -> f64 {
    secrecy_rate_unclamped(p_k, gains, p_j, noise).max(0.0)
}

/// Worst-case gains for user `k` in slot `n` of `state`.
pub fn slot_gains(state: &SolutionState, sc: &ScenarioConfig, k: usize, n: usize) -> SlotGains {
    let qs = &state.traj_s[n];
    let qj = &state.traj_j[n];
    SlotGains {
        sd: los_gain(qs, &sc.user_positions[k], sc.alt_s, sc.ref_gain),
        se: worst_case_gain_se_saturating(qs, &sc.eve_center, sc.eve_radius, sc.alt_s, sc.ref_gain),
        je: worst_case_gain_je(qj, &sc.eve_center, sc.eve_radius, sc.alt_j, sc.ref_gain),
    }
}

/// Unclamped secrecy rate of every (user, slot) pair at the state's powers and positions.
pub fn secrecy_matrix(state: &SolutionState, sc: &ScenarioConfig) -> Vec<Vec<f64>> {
    (0..state.num_users())
        .map(|k| {
            (0..state.num_slots())
                .map(|n| {
                    let g = slot_gains(state, sc, k, n);
                    secrecy_rate_unclamped(state.user_power[k][n], g, state.jam_power[n], sc.noise_power)
                })
                .collect()
        })
        .collect()
}

/// Average interference power at PU `r`.
pub fn interference_at_pu(state: &SolutionState, sc: &ScenarioConfig, r: usize) -> f64 {
    let w = &sc.pu_positions[r];
    let n_slots = state.num_slots();
    let total: f64 = (0..n_slots)
        .map(|n| {
            let h_ju = los_gain(&state.traj_j[n], w, sc.alt_j, sc.ref_gain);
            let h_su = los_gain(&state.traj_s[n], w, sc.alt_s, sc.ref_gain);
            state.jam_power[n] * h_ju + state.slot_power(n) * h_su
        })
        .sum();
    total / n_slots as f64
}

/// Per-user average secrecy rate `(1/N) sum_n theta_k(n) [R_sec^k(n)]^+`.
pub fn user_average_rates(state: &SolutionState, sc: &ScenarioConfig) -> Vec<f64> {
    let n_slots = state.num_slots() as f64;
    secrecy_matrix(state, sc)
        .iter()
        .zip(&state.schedule)
        .map(|(rates, theta)| {
            rates.iter().zip(theta).map(|(r, t)| t * r.max(0.0)).sum::<f64>() / n_slots
        })
        .collect()
}

/// Sum average secrecy rate.
pub fn objective(state: &SolutionState, sc: &ScenarioConfig) -> f64 {
    user_average_rates(state, sc).iter().sum()
}

/// Sum average rate with the eavesdropper ignored.
pub fn rate_only_objective(state: &SolutionState, sc: &ScenarioConfig) -> f64 {
    let mut total = 0.0;
    for k in 0..state.num_users() {
        for n in 0..state.num_slots() {
            let g = los_gain(&state.traj_s[n], &sc.user_positions[k], sc.alt_s, sc.ref_gain);
            total += state.schedule[k][n] * rate_user(state.user_power[k][n], g, sc.noise_power);
        }
    }
    total / state.num_slots() as f64
}

/// Largest violation of each constraint family. Power and interference
/// families are normalized by their cap; the rest are in native units
/// (bits/s/Hz, meters, dimensionless schedule mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub scheduling_sum: f64,
    pub binariness: f64,
    pub min_rate: f64,
    pub peak_user_power: f64,
    pub avg_user_power: f64,
    pub peak_jam_power: f64,
    pub avg_jam_power: f64,
    pub endpoints: f64,
    pub speed: f64,
    pub interference: f64,
    /// How far S enters the eavesdropper disc (meters).
    pub eve_disc: f64,
    pub tol: f64,
    pub endpoint_tol: f64,
    pub overall_feasible: bool,
}

pub const ENDPOINT_TOL: f64 = 1e-9;

impl FeasibilityReport {
    /// `(name, violation, tolerance)` for every family.
    pub fn families(&self) -> [(&'static str, f64, f64); 11] {
        [
            ("scheduling_sum", self.scheduling_sum, self.tol),
            ("binariness", self.binariness, self.tol),
            ("min_rate", self.min_rate, self.tol),
            ("peak_user_power", self.peak_user_power, self.tol),
            ("avg_user_power", self.avg_user_power, self.tol),
            ("peak_jam_power", self.peak_jam_power, self.tol),
            ("avg_jam_power", self.avg_jam_power, self.tol),
            ("endpoints", self.endpoints, self.endpoint_tol),
            ("speed", self.speed, self.tol),
            ("interference", self.interference, self.tol),
            ("eve_disc", self.eve_disc, self.tol),
        ]
    }

    /// Families above tolerance.
    pub fn violated(&self) -> Vec<&'static str> {
        self.families()
            .iter()
            .filter(|(_, v, t)| !(v <= t))
            .map(|(name, _, _)| *name)
            .collect()
    }

    /// Feasible apart from the listed families.
    pub fn feasible_except(&self, ignore: &[&str]) -> bool {
        self.violated().iter().all(|v| ignore.contains(v))
    }
}

fn positive(x: f64) -> f64 {
    x.max(0.0)
}

pub fn check_feasibility(state: &SolutionState, sc: &ScenarioConfig, tol: f64) -> FeasibilityReport {
    let k_users = state.num_users();
    let n_slots = state.num_slots();
    let nf = n_slots as f64;

    let scheduling_sum = (0..n_slots).map(|n| positive(state.slot_mass(n) - 1.0)).fold(0.0, f64::max);
    let binariness = state
        .schedule
        .iter()
        .flatten()
        .map(|&t| if (0.0..=1.0).contains(&t) { t.min(1.0 - t) } else { positive(-t).max(t - 1.0) })
        .fold(0.0, f64::max);
    let min_rate = user_average_rates(state, sc)
        .iter()
        .map(|&r| positive(sc.r_min - r))
        .fold(0.0, f64::max);

    let peak_user_power = state
        .user_power
        .iter()
        .flatten()
        .map(|&p| positive(p - sc.p_s_max).max(positive(-p)) / sc.p_s_max)
        .fold(0.0, f64::max);
    let avg_user = (0..n_slots).map(|n| state.slot_power(n)).sum::<f64>() / nf;
    let avg_user_power = positive(avg_user - sc.p_s_ave) / sc.p_s_ave;

    let jam_scale = if sc.p_j_max > 0.0 { sc.p_j_max } else { 1.0 };
    let peak_jam_power = state
        .jam_power
        .iter()
        .map(|&p| positive(p - sc.p_j_max).max(positive(-p)) / jam_scale)
        .fold(0.0, f64::max);
    let avg_jam = state.jam_power.iter().sum::<f64>() / nf;
    let avg_jam_power =
        positive(avg_jam - sc.p_j_ave) / if sc.p_j_ave > 0.0 { sc.p_j_ave } else { jam_scale };

    let endpoints = [
        state.traj_s[0].dist(&sc.start_s),
        state.traj_s[n_slots - 1].dist(&sc.end_s),
        state.traj_j[0].dist(&sc.start_j),
        state.traj_j[n_slots - 1].dist(&sc.end_j),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let step_violation = |traj: &[Position2D], max_step: f64| {
        traj.windows(2)
            .map(|w| positive(w[1].dist(&w[0]) - max_step))
            .fold(0.0, f64::max)
    };
    let speed = step_violation(&state.traj_s, sc.max_step_s()).max(step_violation(&state.traj_j, sc.max_step_j()));

    let interference = (0..sc.num_pus)
        .map(|r| positive(interference_at_pu(state, sc, r) - sc.interference_threshold[r]) / sc.interference_threshold[r])
        .fold(0.0, f64::max);

    let eve_disc = state
        .traj_s
        .iter()
        .map(|q| positive(sc.eve_radius - q.dist(&sc.eve_center)))
        .fold(0.0, f64::max);

    let _ = k_users;
    let mut report = FeasibilityReport {
        scheduling_sum,
        binariness,
        min_rate,
        peak_user_power,
        avg_user_power,
        peak_jam_power,
        avg_jam_power,
        endpoints,
        speed,
        interference,
        eve_disc,
        tol,
        endpoint_tol: ENDPOINT_TOL,
        overall_feasible: false,
    };
    report.overall_feasible = report.violated().is_empty();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_paper_scenario;
    use proptest::prelude::*;

    const NOISE: f64 = 1e-12;

    fn single_slot_state(p: f64, pj: f64) -> SolutionState {
        SolutionState {
            schedule: vec![vec![1.0]],
            user_power: vec![vec![p]],
            jam_power: vec![pj],
            traj_s: vec![Position2D::new(0.0, 0.0)],
            traj_j: vec![Position2D::new(10.0, 0.0)],
        }
    }

    #[test]
    fn user_rate_values() {
        assert_eq!(rate_user(0.0, 4.4444e-6, NOISE), 0.0);
        let expected = (1.0 + 0.1 * 4.4444e-6 / NOISE).log2();
        assert!((rate_user(0.1, 4.4444e-6, NOISE) - expected).abs() < 1e-12);
        assert!((rate_user(0.1, 4.4444e-6, NOISE) - 18.762).abs() < 1e-3);
    }

    #[test]
    fn doubling_noise_costs_one_bit_at_high_snr() {
        let r1 = rate_user(1.0, 1e-6, 1e-12);
        let r2 = rate_user(1.0, 1e-6, 2e-12);
        assert!((r1 - r2 - 1.0).abs() < 0.01);
    }

    #[test]
    fn eve_rate_values() {
        let r = rate_eve(0.1, 3.0769e-6, 0.1, 5.0e-6, NOISE);
        assert!((r - (1.0f64 + 0.61538).log2()).abs() < 1e-4);
        assert!((r - 0.6919).abs() < 1e-4);
        assert_eq!(rate_eve(0.1, 3e-6, 0.0, 5e-6, NOISE), rate_user(0.1, 3e-6, NOISE));
        let mut prev = f64::INFINITY;
        for pj in [0.0, 1e-3, 1e-1, 10.0, 1e3] {
            let r = rate_eve(0.1, 3e-6, pj, 5e-6, NOISE);
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn secrecy_values() {
        let g = SlotGains { sd: 4.4444e-6, se: 3.0769e-6, je: 5.0e-6 };
        let s = secrecy_rate_slot(0.1, g, 0.1, NOISE);
        assert!((s - 18.070).abs() < 1e-3, "{s}");
        let g0 = SlotGains { se: 0.0, ..g };
        assert_eq!(secrecy_rate_slot(0.1, g0, 0.1, NOISE), rate_user(0.1, g.sd, NOISE));
        // equal SNRs at D and E
        let sinr_gain = 3.0e-6 / (0.1 * 5e-6 / NOISE + 1.0);
        let g_eq = SlotGains { sd: sinr_gain, se: 3.0e-6, je: 5e-6 };
        assert!(secrecy_rate_slot(0.1, g_eq, 0.1, NOISE).abs() < 1e-12);
    }

    #[test]
    fn interference_values() {
        let sc = default_paper_scenario();
        let mut st = single_slot_state(0.0, 0.0);
        assert_eq!(interference_at_pu(&st, &sc, 0), 0.0);
        st.user_power[0][0] = 0.1;
        st.jam_power[0] = 0.1;
        let w = sc.pu_positions[0];
        let h_su = los_gain(&st.traj_s[0], &w, sc.alt_s, sc.ref_gain);
        let h_ju = los_gain(&st.traj_j[0], &w, sc.alt_j, sc.ref_gain);
        let got = interference_at_pu(&st, &sc, 0);
        assert!((got - (0.1 * h_su + 0.1 * h_ju)).abs() < 1e-20);
        // the 1e-6 / 2e-6 gain example: 0.1 * 1e-6 + 0.1 * 2e-6
        assert!((0.1f64 * 1e-6 + 0.1 * 2e-6 - 3.0e-7).abs() < 1e-20);
        let mut scaled = st.clone();
        scaled.user_power[0][0] *= 3.0;
        scaled.jam_power[0] *= 3.0;
        assert!((interference_at_pu(&scaled, &sc, 0) - 3.0 * got).abs() < 1e-18);
    }

    #[test]
    fn objective_single_slot_matches_slot_rate() {
        let sc = default_paper_scenario();
        let st = single_slot_state(1e-5, 1e-5);
        let g = slot_gains(&st, &sc, 0, 0);
        let mut sc1 = sc.clone();
        sc1.num_users = 1;
        sc1.user_positions.truncate(1);
        assert_eq!(objective(&st, &sc1), secrecy_rate_slot(1e-5, g, 1e-5, sc.noise_power));
        let mut off = st.clone();
        off.schedule[0][0] = 0.0;
        assert_eq!(objective(&off, &sc1), 0.0);
    }

    #[test]
    fn speed_violation_is_measured() {
        let sc = default_paper_scenario();
        let n = sc.num_slots;
        let step = sc.max_step_s();
        let mut st = SolutionState {
            schedule: vec![vec![0.0; n]; 3],
            user_power: vec![vec![0.0; n]; 3],
            jam_power: vec![0.0; n],
            traj_s: vec![sc.start_s; n],
            traj_j: vec![sc.start_j; n],
        };
        for q in st.traj_s.iter_mut().skip(1).take(n - 2) {
            q.y = sc.start_s.y + 2.0 * step;
        }
        let rep = check_feasibility(&st, &sc, 1e-6);
        assert!((rep.speed - step).abs() < 1e-9);
        assert!(!rep.overall_feasible);
    }

    fn random_state(k: usize, n: usize, seed: &[f64]) -> SolutionState {
        let mut it = seed.iter().cycle().copied();
        let mut next = move || it.next().unwrap();
        SolutionState {
            schedule: (0..k).map(|_| (0..n).map(|_| next() / k as f64).collect()).collect(),
            user_power: (0..k).map(|_| (0..n).map(|_| 4e-5 * next()).collect()).collect(),
            jam_power: (0..n).map(|_| 4e-5 * next()).collect(),
            traj_s: (0..n).map(|_| Position2D::new(100.0 * next() - 50.0, 100.0 * next() - 50.0)).collect(),
            traj_j: (0..n).map(|_| Position2D::new(100.0 * next() - 50.0, 100.0 * next() - 50.0)).collect(),
        }
    }

    proptest! {
        #[test]
        fn clamped_is_nonnegative_and_agrees_when_positive(p in 0.0..1e-4f64, pj in 0.0..1e-4f64,
                                                            sd in 1e-8..1e-5f64, se in 0.0..1e-5f64,
                                                            je in 0.0..1e-5f64) {
            let g = SlotGains { sd, se, je };
            let c = secrecy_rate_slot(p, g, pj, NOISE);
            let u = secrecy_rate_unclamped(p, g, pj, NOISE);
            prop_assert!(c >= 0.0);
            if u >= 0.0 { prop_assert_eq!(c, u); }
        }

        #[test]
        fn objective_matches_slot_by_slot_resummation(seed in proptest::collection::vec(0.0..1.0f64, 40)) {
            let sc = default_paper_scenario();
            let st = random_state(3, 4, &seed);
            let mut total = 0.0;
            for n in 0..4 {
                for k in 0..3 {
                    let qs = st.traj_s[n];
                    let gap = (qs.dist(&sc.eve_center) - sc.eve_radius).max(0.0);
                    let sd = sc.ref_gain / (qs.dist2(&sc.user_positions[k]) + sc.alt_s.powi(2));
                    let se = sc.ref_gain / (gap * gap + sc.alt_s.powi(2));
                    let far = st.traj_j[n].dist(&sc.eve_center) + sc.eve_radius;
                    let je = sc.ref_gain / (far * far + sc.alt_j.powi(2));
                    let p = st.user_power[k][n];
                    let snr_d = p * sd / sc.noise_power;
                    let sinr_e = p * se / (st.jam_power[n] * je + sc.noise_power);
                    total += st.schedule[k][n] * ((1.0 + snr_d).log2() - (1.0 + sinr_e).log2()).max(0.0);
                }
            }
            prop_assert!((objective(&st, &sc) - total / 4.0).abs() < 1e-12);
        }

        #[test]
        fn objective_is_permutation_invariant(seed in proptest::collection::vec(0.0..1.0f64, 40)) {
            let sc = default_paper_scenario();
            let st = random_state(3, 5, &seed);
            let perm = [2usize, 0, 1];
            let mut sc_p = sc.clone();
            sc_p.user_positions = perm.iter().map(|&i| sc.user_positions[i]).collect();
            let mut st_p = st.clone();
            st_p.schedule = perm.iter().map(|&i| st.schedule[i].clone()).collect();
            st_p.user_power = perm.iter().map(|&i| st.user_power[i].clone()).collect();
            prop_assert!((objective(&st, &sc) - objective(&st_p, &sc_p)).abs() < 1e-12);
        }

        #[test]
        fn doubling_threshold_never_breaks_feasibility(seed in proptest::collection::vec(0.0..1.0f64, 40)) {
            let sc = default_paper_scenario();
            let st = random_state(3, 6, &seed);
            let rep = check_feasibility(&st, &sc, 1e-6);
            let mut relaxed = sc.clone();
            for g in relaxed.interference_threshold.iter_mut() { *g *= 2.0; }
            let rep2 = check_feasibility(&st, &relaxed, 1e-6);
            prop_assert!(rep2.interference <= rep.interference);
            if rep.overall_feasible { prop_assert!(rep2.overall_feasible); }
        }
    }
}

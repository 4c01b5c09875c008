//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uav_secrecy::channel::{los_gain, worst_case_gain_je, worst_case_gain_se, Position2D};
use uav_secrecy::convex_core::{solve, solve_program_lp, ConvexProgram};
use uav_secrecy::optimizer::{init_solution, run_scheme, IterationTrace, SchemeId, FEAS_TOL};
use uav_secrecy::oracle::*;
use uav_secrecy::rates::*;
use uav_secrecy::scenario::{dbm_to_watts, default_paper_scenario, ScenarioConfig};
use uav_secrecy::subproblems::*;

const PERIODS: [f64; 4] = [80.0, 100.0, 120.0, 140.0];
const RADII: [f64; 4] = [0.0, 10.0, 20.0, 30.0];
const GAMMA_DBM: [f64; 6] = [-95.0, -90.0, -85.0, -80.0, -75.0, -70.0];

struct Run {
    sc: ScenarioConfig,
    state: SolutionState,
    trace: IterationTrace,
}

type Outcome = (bool, String);

fn period_scenario(t: f64) -> ScenarioConfig {
    let mut sc = default_paper_scenario().with_period(t).unwrap();
    sc.place_endpoints_on_init_circles();
    sc
}

fn solve_run(sc: ScenarioConfig, scheme: SchemeId) -> Result<Run, String> {
    let (state, trace) = run_scheme(&sc, scheme).map_err(|e| format!("{scheme}: {e}"))?;
    Ok(Run { sc, state, trace })
}

/// Every optimizer run the criteria need, keyed by a label.
struct Runs {
    by_period: BTreeMap<(u64, SchemeId), Run>,
    by_radius: BTreeMap<(u64, SchemeId), Run>,
    by_gamma: Vec<(f64, Run)>,
    errors: Vec<String>,
}

fn key(v: f64) -> u64 {
    v.to_bits()
}

fn collect_runs() -> Runs {
    let mut runs = Runs { by_period: BTreeMap::new(), by_radius: BTreeMap::new(), by_gamma: Vec::new(), errors: vec![] };
    for t in PERIODS {
        for scheme in SchemeId::ALL {
            match solve_run(period_scenario(t), scheme) {
                Ok(r) => drop(runs.by_period.insert((key(t), scheme), r)),
                Err(e) => runs.errors.push(format!("T={t} {e}")),
            }
        }
    }
    for r in RADII {
        for scheme in [SchemeId::Proposed, SchemeId::Npc] {
            let sc = default_paper_scenario().with_eve_radius(r).unwrap();
            match solve_run(sc, scheme) {
                Ok(x) => drop(runs.by_radius.insert((key(r), scheme), x)),
                Err(e) => runs.errors.push(format!("r_E={r} {e}")),
            }
        }
    }
    for g in GAMMA_DBM {
        let sc = default_paper_scenario().with_interference_threshold(dbm_to_watts(g)).unwrap();
        match solve_run(sc, SchemeId::Proposed) {
            Ok(x) => runs.by_gamma.push((g, x)),
            Err(e) => runs.errors.push(format!("Gamma={g} dBm {e}")),
        }
    }
    runs
}

impl Runs {
    fn all(&self) -> impl Iterator<Item = &Run> {
        self.by_period.values().chain(self.by_radius.values()).chain(self.by_gamma.iter().map(|(_, r)| r))
    }
}

// ------------------------------------------------------------------ criteria

fn monotone_convergence(runs: &Runs) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for t in PERIODS {
        let Some(run) = runs.by_period.get(&(key(t), SchemeId::Proposed)) else {
            return (false, format!("T={t} did not run"));
        };
        let tr = &run.trace;
        let delta = tr.last_delta().unwrap_or(0.0);
        let good = tr.max_decrease() <= 1e-9 && tr.converged && tr.iterations.len() <= 30 && delta <= run.sc.epsilon;
        ok &= good;
        parts.push(format!("T={t}: {} iters, drop {:.1e}", tr.iterations.len(), tr.max_decrease()));
    }
    (ok, parts.join("; "))
}

fn feasibility(runs: &Runs) -> Outcome {
    let mut bad = runs.errors.clone();
    let mut count = 0;
    for run in runs.all() {
        count += 1;
        let rep = check_feasibility(&run.state, &run.sc, FEAS_TOL);
        if !rep.overall_feasible {
            bad.push(format!("{} violates {:?}", run.trace.scheme, rep.violated()));
        }
    }
    let gamma_default = default_paper_scenario().interference_threshold.iter().all(|&g| (g - 1e-11).abs() < 1e-20);
    if !gamma_default {
        bad.push("default threshold is not 1e-11 W".into());
    }
    (bad.is_empty(), if bad.is_empty() { format!("{count} final states at tol 1e-6") } else { bad.join("; ") })
}

fn tight_at(bp: &BlockProgram, truth: &[Vec<f64>]) -> f64 {
    bp.slot_rates(&bp.program.start).iter().map(|&(k, n, v)| (v - truth[k][n]).abs()).fold(0.0, f64::max)
}

fn sca_tightness(runs: &Runs) -> Outcome {
    let sc = default_paper_scenario();
    let mut states = vec![];
    let mut frac = init_solution(&sc).unwrap();
    frac.schedule.iter_mut().flatten().for_each(|t| *t = 1.0 / 3.0);
    states.push(frac);
    if let Some(r) = runs.by_period.get(&(key(100.0), SchemeId::Proposed)) {
        states.push(r.state.clone());
    }
    let mut worst: f64 = 0.0;
    for s in &states {
        let truth = secrecy_matrix(s, &sc);
        let exp = ExpansionPoint::from(s);
        worst = worst
            .max(tight_at(&build_power_program(s, &sc, &exp), &truth))
            .max(tight_at(&build_s_trajectory_program(s, &sc, &exp), &truth))
            .max(tight_at(&build_j_trajectory_program(s, &sc, &exp), &truth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..20 {
        let g = random_gains(&mut rng);
        let e = (rng.gen_range(0.0..sc.p_s_max), rng.gen_range(0.0..sc.p_j_max));
        for i in 0..50 {
            for j in 0..50 {
                let (pk, pj) = (sc.p_s_max * i as f64 / 49.0, sc.p_j_max * j as f64 / 49.0);
                if power_lb_rate(pk, pj, e, g, sc.noise_power) > secrecy_rate_unclamped(pk, g, pj, sc.noise_power) + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    (
        worst <= 1e-9 && violations == 0,
        format!("max gap at expansion {worst:.1e}; power bound violations {violations}/50000"),
    )
}

fn random_gains(rng: &mut ChaCha8Rng) -> SlotGains {
    SlotGains {
        sd: 10f64.powf(rng.gen_range(-7.0..-5.0)),
        se: 10f64.powf(rng.gen_range(-7.5..-5.5)),
        je: 10f64.powf(rng.gen_range(-7.0..-5.0)),
    }
}

/// Worst relative finite-difference error over every function of `prog` at
/// ten random points around its start.
fn program_gradients(prog: &ConvexProgram, rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 10 {
        let x: Vec<f64> = prog
            .start
            .iter()
            .zip(&prog.bounds)
            .map(|(&v, &(lo, hi))| (v + scale * rng.gen_range(-1.0..1.0)).clamp(lo, hi))
            .collect();
        if !prog.max_violation(&x).is_finite() {
            continue;
        }
        done += 1;
        worst = worst.max(fd_gradient_check_fn(prog.objective.as_ref(), &x, 1e-6));
        for g in &prog.convex_ineq {
            worst = worst.max(fd_gradient_check_fn(g.as_ref(), &x, 1e-6));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let sc = default_paper_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (pm, pjm, noise) = (sc.p_s_max, sc.p_j_max, sc.noise_power);

    // closed forms, in powers normalized by their peaks
    let mut closed: f64 = 0.0;
    for _ in 0..10 {
        let g = random_gains(&mut rng);
        let e = (rng.gen_range(0.0..pm), rng.gen_range(0.0..pjm));
        let f = |u: &[f64]| {
            let (dk, dj) = power_lb_rate_grad(u[0] * pm, u[1] * pjm, e, g, noise);
            (power_lb_rate(u[0] * pm, u[1] * pjm, e, g, noise), vec![dk * pm, dj * pjm])
        };
        closed = closed.max(fd_gradient_check(f, &[rng.gen_range(0.05..1.0), rng.gen_range(0.05..1.0)], 1e-6));

        let q = Position2D::new(rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0));
        let w = Position2D::new(rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0));
        let c = rng.gen_range(1e5..1e8);
        let (_, l) = s_rate_bound_coeffs(&q, &w, c, sc.alt_s, sc.ref_gain);
        let s_m = q.dist2(&w);
        let h2 = sc.alt_s * sc.alt_s;
        let truth = |s: &[f64]| ((1.0 + c * sc.ref_gain / (s[0] * 1e3 + h2)).log2(), vec![l * 1e3]);
        closed = closed.max(fd_gradient_check(truth, &[s_m / 1e3], 1e-6));

        let ctr = Position2D::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let pj = rng.gen_range(1e-6..pjm);
        let (m, _) = j_rate_bound_terms(&q, &ctr, 10.0, pj, sc.alt_j, sc.ref_gain, noise);
        let sj = (q.dist(&ctr) + 10.0).powi(2);
        let slope = j_composite_slope(m, pj, sj, sc.alt_j, sc.ref_gain);
        let hj2 = sc.alt_j * sc.alt_j;
        let n_term = |s: &[f64]| ((pj * sc.ref_gain / (s[0] * 1e3 + hj2) + noise).log2(), vec![slope * 1e3]);
        closed = closed.max(fd_gradient_check(n_term, &[sj / 1e3], 1e-6));
    }

    // every function handed to the solver
    let mut s = init_solution(&sc).unwrap();
    s.schedule.iter_mut().flatten().for_each(|t| *t = 1.0 / 3.0);
    let exp = ExpansionPoint::from(&s);
    let built = program_gradients(&build_power_program(&s, &sc, &exp).program, &mut rng, 1e-2)
        .max(program_gradients(&build_s_trajectory_program(&s, &sc, &exp).program, &mut rng, 1e-1))
        .max(program_gradients(&build_j_trajectory_program(&s, &sc, &exp).program, &mut rng, 1e-1));
    (
        closed <= 1e-5 && built <= 1e-5,
        format!("closed forms {closed:.1e}, block programs {built:.1e}"),
    )
}

fn lp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut instances, mut dominated, mut feasible, mut close) = (0, 0, 0, 0);
    while instances < 50 {
        let kk = rng.gen_range(1..=3);
        let nn = rng.gen_range(1..=12 / kk);
        let rates: Vec<Vec<f64>> = (0..kk).map(|_| (0..nn).map(|_| rng.gen_range(-0.5..3.0)).collect()).collect();
        let r_min = rng.gen_range(0.0..0.8 / kk as f64);
        let Ok((best, _)) = exhaustive_schedule_oracle(&rates, r_min, None) else {
            continue;
        };
        instances += 1;
        let inst = SchedulingInstance::unbudgeted(rates.clone(), r_min);
        let bp = build_scheduling_lp_for(&inst);
        let rep = solve_program_lp(&bp.program).unwrap();
        if rep.value >= best - 1e-9 {
            dominated += 1;
        }
        let relaxed: Vec<Vec<f64>> = (0..kk).map(|k| (0..nn).map(|n| rep.x_opt[n * kk + k]).collect()).collect();
        let rounded = round_schedule(&relaxed, &rates);
        let Some(fixed) = repair_schedule(&inst, &rounded) else {
            continue;
        };
        let binary = fixed.iter().flatten().all(|&t| t == 0.0 || t == 1.0);
        let exclusive = (0..nn).all(|n| (0..kk).map(|k| fixed[k][n]).sum::<f64>() <= 1.0);
        if binary && exclusive && inst.violation(&fixed) <= 1e-9 {
            feasible += 1;
            if (best - inst.value(&fixed)).abs() <= 0.05 * best.abs().max(1e-12) {
                close += 1;
            }
        }
    }
    (
        dominated == 50 && feasible == 50 && close >= 45,
        format!("LP >= oracle {dominated}/50, rounded feasible {feasible}/50, within 5% {close}/50"),
    )
}

/// One user, one slot, random geometry.
fn single_slot(rng: &mut ChaCha8Rng) -> (ScenarioConfig, SolutionState) {
    let mut sc = default_paper_scenario();
    let mut p = || Position2D::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0));
    sc.num_users = 1;
    sc.user_positions = vec![p()];
    sc.pu_positions = vec![p(), p()];
    sc.eve_center = p();
    sc.num_slots = 1;
    sc.period = 1.0;
    sc.slot_len = 1.0;
    sc.r_min = 0.0;
    sc.start_s = p();
    sc.end_s = sc.start_s;
    sc.start_j = p();
    sc.end_j = sc.start_j;
    // keep S outside the disc
    sc.eve_radius = rng.gen_range(0.0..0.5 * sc.start_s.dist(&sc.eve_center));
    let gamma = dbm_to_watts(rng.gen_range(-95.0..-70.0));
    sc.interference_threshold = vec![gamma; 2];
    let s = SolutionState {
        schedule: vec![vec![1.0]],
        user_power: vec![vec![0.5 * sc.p_s_ave]],
        jam_power: vec![0.5 * sc.p_j_ave],
        traj_s: vec![sc.start_s],
        traj_j: vec![sc.start_j],
    };
    (sc, s)
}

fn power_vs_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 20 {
        let (sc, mut s) = single_slot(&mut rng);
        let caps: Vec<(f64, f64, f64)> = (0..2)
            .map(|r| {
                let w = &sc.pu_positions[r];
                (
                    los_gain(&s.traj_s[0], w, sc.alt_s, sc.ref_gain),
                    los_gain(&s.traj_j[0], w, sc.alt_j, sc.ref_gain),
                    sc.interference_threshold[r],
                )
            })
            .collect();
        // the start must satisfy the caps
        if caps.iter().any(|&(a, b, l)| a * s.user_power[0][0] + b * s.jam_power[0] > l) {
            continue;
        }
        done += 1;
        for _ in 0..200 {
            let bp = build_power_program(&s, &sc, &ExpansionPoint::from(&s));
            let next = bp.decode(&solve(&bp.program, 1e-9).x_opt, &s);
            let moved = (next.user_power[0][0] - s.user_power[0][0]).abs() / sc.p_s_max
                + (next.jam_power[0] - s.jam_power[0]).abs() / sc.p_j_max;
            s = next;
            if moved < 1e-12 {
                break;
            }
        }
        let g = slot_gains(&s, &sc, 0, 0);
        let inst = SlotInstance {
            gain_sd: g.sd,
            gain_se: g.se,
            gain_je: g.je,
            noise: sc.noise_power,
            p_max: sc.p_s_max.min(sc.p_s_ave),
            pj_max: sc.p_j_max.min(sc.p_j_ave),
            caps,
        };
        let gk = GridSpec::new(0.0, inst.p_max, 200).unwrap();
        let gj = GridSpec::new(0.0, inst.pj_max, 200).unwrap();
        let (_, _, best) = grid_power_oracle(&inst, (&gk, &gj)).unwrap();
        let got = inst.secrecy(s.user_power[0][0], s.jam_power[0]);
        worst = worst.max((got - best).abs());
    }
    (worst <= 1e-3, format!("max |SCA - grid| {worst:.1e} bits/s/Hz over 20 instances"))
}

fn eve_soundness(runs: &Runs) -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for r in [10.0, 20.0, 30.0] {
        let Some(run) = runs.by_radius.get(&(key(r), SchemeId::Proposed)) else {
            return (false, format!("r_E={r} did not run"));
        };
        let gap = monte_carlo_eve_check(&run.state, &run.sc, 10_000, 42);
        ok &= gap >= -1e-9;
        parts.push(format!("r_E={r}: {gap:.2e}"));
    }
    (ok, format!("min sampled gap {}", parts.join(", ")))
}

fn trends(runs: &Runs) -> Outcome {
    let mut fails = vec![];
    let obj = |r: &Run| r.trace.final_objective;
    // (a) orderings
    for t in PERIODS {
        let Some(p) = runs.by_period.get(&(key(t), SchemeId::Proposed)) else { continue };
        for scheme in &SchemeId::ALL[1..] {
            if let Some(o) = runs.by_period.get(&(key(t), *scheme)) {
                if obj(o) > obj(p) {
                    fails.push(format!("T={t}: {scheme} beats proposed"));
                }
            }
        }
    }
    for r in RADII {
        if let (Some(p), Some(n)) =
            (runs.by_radius.get(&(key(r), SchemeId::Proposed)), runs.by_radius.get(&(key(r), SchemeId::Npc)))
        {
            if obj(n) > obj(p) {
                fails.push(format!("r_E={r}: npc beats proposed"));
            }
        }
    }
    // (b) radius
    let radius: Vec<f64> =
        RADII.iter().filter_map(|&r| runs.by_radius.get(&(key(r), SchemeId::Proposed)).map(obj)).collect();
    if radius.len() != 4 || radius.windows(2).any(|w| w[1] > w[0] * 1.01) {
        fails.push(format!("radius trend {radius:?}"));
    }
    // (c) threshold, non-decreasing up to the convergence tolerance, flat at the top
    let gamma: Vec<f64> = runs.by_gamma.iter().map(|(_, r)| obj(r)).collect();
    let eps = default_paper_scenario().epsilon;
    let top = gamma.len() == 6 && (gamma[5] - gamma[4]).abs() <= 1e-3;
    if gamma.len() != 6 || gamma.windows(2).any(|w| w[1] < w[0] - eps) || !top {
        fails.push(format!("threshold trend {gamma:?}"));
    }
    // (d) schedules
    for run in runs.all() {
        let one_user = (0..run.state.num_slots()).all(|n| {
            let col: Vec<f64> = run.state.schedule.iter().map(|row| row[n]).collect();
            col.iter().all(|&t| t == 0.0 || t == 1.0) && col.iter().sum::<f64>() <= 1.0
        });
        let floors = user_average_rates(&run.state, &run.sc).iter().all(|&r| r >= run.sc.r_min - FEAS_TOL);
        if !one_user || !floors {
            fails.push(format!("{} schedule: one-user {one_user}, floors {floors}", run.trace.scheme));
        }
    }
    let detail = format!(
        "r_E {:?}; Gamma {:?}",
        radius.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        gamma.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
    );
    (fails.is_empty(), if fails.is_empty() { detail } else { fails.join("; ") })
}

fn degenerate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact = true;
    for _ in 0..1000 {
        let q = Position2D::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let c = Position2D::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let h = rng.gen_range(5.0..50.0);
        exact &= worst_case_gain_se(&q, &c, 0.0, h, 1e-3).unwrap().to_bits() == los_gain(&q, &c, h, 1e-3).to_bits();
        exact &= worst_case_gain_je(&q, &c, 0.0, h, 1e-3).to_bits() == los_gain(&q, &c, h, 1e-3).to_bits();
    }
    let mut sc = default_paper_scenario();
    sc.eve_center = Position2D::new(1e6, 1e6);
    sc.eve_radius = 0.0;
    let gap = match run_scheme(&sc, SchemeId::Proposed) {
        Ok((s, _)) => (objective(&s, &sc) - rate_only_objective(&s, &sc)).abs(),
        Err(e) => return (false, format!("zero-eavesdropper run failed: {e}")),
    };
    (exact && gap <= 1e-6, format!("bitwise gains {exact}; |secrecy - rate objective| {gap:.1e}"))
}

fn main() {
    let start = Instant::now();
    let runs = collect_runs();
    let results: Vec<(&str, Outcome)> = vec![
        ("monotone convergence", monotone_convergence(&runs)),
        ("feasibility", feasibility(&runs)),
        ("SCA tightness", sca_tightness(&runs)),
        ("gradient correctness", gradients()),
        ("LP/oracle equivalence", lp_oracle()),
        ("power subproblem vs grid", power_vs_grid()),
        ("worst-case bound soundness", eve_soundness(&runs)),
        ("qualitative trends", trends(&runs)),
        ("degenerate correctness", degenerate()),
    ];
    println!();
    let mut failed = 0;
    for (name, (ok, detail)) in &results {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {}/{} passed in {:.0} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

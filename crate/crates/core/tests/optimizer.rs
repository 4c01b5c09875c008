use uav_secrecy::channel::Position2D;
use uav_secrecy::optimizer::*;
use uav_secrecy::rates::{check_feasibility, objective, secrecy_matrix};
use uav_secrecy::scenario::{default_paper_scenario, ScenarioConfig};

/// Short horizon with the disc moved to the centroid so the small initial circles clear it.
fn short(period: f64) -> ScenarioConfig {
    let mut sc = default_paper_scenario();
    sc.eve_center = sc.user_centroid();
    let mut sc = sc.with_period(period).unwrap();
    sc.place_endpoints_on_init_circles();
    sc
}

#[test]
fn init_circle_geometry() {
    let sc = default_paper_scenario();
    let s = init_solution(&sc).unwrap();
    let c = Position2D::new(-5.0 / 3.0, -80.0 / 3.0);
    let farthest = sc.user_positions.iter().map(|w| w.dist(&c)).fold(0.0, f64::max);
    let r_s = (7.0 * 100.0 / std::f64::consts::TAU).min(farthest);
    assert!((r_s - 56.03).abs() < 0.01, "{r_s}");
    for (traj, r, step) in [(&s.traj_s, r_s, sc.max_step_s()), (&s.traj_j, 0.5 * r_s, sc.max_step_j())] {
        assert_eq!(traj[0], traj[traj.len() - 1]);
        for q in traj.iter() {
            assert!((q.dist(&c) - r).abs() < 1e-9);
        }
        for w in traj.windows(2) {
            assert!(w[0].dist(&w[1]) <= step + 1e-9);
        }
    }
    for n in 0..sc.num_slots {
        assert_eq!(s.active_user(n), Some(n % 3));
    }
    assert!(s.user_power.iter().flatten().all(|&p| p == sc.p_s_ave));
}

#[test]
fn init_rejects_endpoints_off_the_circle() {
    let mut sc = default_paper_scenario();
    sc.start_s = Position2D::new(0.0, 0.0);
    sc.end_s = sc.start_s;
    assert!(matches!(init_solution(&sc), Err(OptimizerError::Init(_))));
}

#[test]
fn cutoff_only_touches_scheduled_negative_slots() {
    let sc = short(12.0);
    let mut s = init_solution(&sc).unwrap();
    s.jam_power.iter_mut().for_each(|p| *p = 0.0);
    // S right above the disc center makes every slot leak
    s.traj_s.iter_mut().for_each(|q| *q = sc.eve_center);
    let rates = secrecy_matrix(&s, &sc);
    let out = apply_power_cutoff(&s, &sc);
    for k in 0..3 {
        for n in 0..sc.num_slots {
            let scheduled = s.schedule[k][n] > 0.0;
            let expect = if scheduled && rates[k][n] < 0.0 { 0.0 } else { s.user_power[k][n] };
            assert_eq!(out.user_power[k][n], expect);
        }
    }
    assert!(out.user_power.iter().flatten().any(|&p| p == 0.0));
    let again = apply_power_cutoff(&init_solution(&sc).unwrap(), &sc);
    assert_eq!(again.jam_power, s.jam_power.iter().map(|_| sc.p_j_ave).collect::<Vec<_>>());
}

#[test]
fn proposed_is_monotone_feasible_and_binary() {
    let sc = short(30.0);
    let (s, tr) = run_scheme(&sc, SchemeId::Proposed).unwrap();
    assert!(tr.max_decrease() <= 1e-9, "{}", tr.max_decrease());
    assert!(tr.converged);
    assert!(s.is_binary());
    let rep = check_feasibility(&s, &sc, FEAS_TOL);
    assert!(rep.violated().is_empty(), "{:?}", rep.violated());
    assert!(tr.final_objective >= tr.initial_objective);
    assert!((objective(&s, &sc) - tr.final_objective).abs() < 1e-12);
}

#[test]
fn benchmarks_keep_their_fixed_blocks() {
    let sc = short(20.0);
    let init = init_solution(&sc).unwrap();
    let (npc, _) = run_scheme(&sc, SchemeId::Npc).unwrap();
    assert_eq!(npc.user_power, init.user_power);
    assert_eq!(npc.jam_power, init.jam_power);
    let (b1, _) = run_scheme(&sc, SchemeId::BenchmarkI).unwrap();
    assert_eq!(b1.traj_s, init.traj_s);
    assert_eq!(b1.traj_j, init.traj_j);
    let (b2, _) = run_scheme(&sc, SchemeId::BenchmarkIi).unwrap();
    assert_eq!(b2.traj_j, init.traj_j);
    assert_eq!(b2.jam_power, init.jam_power);
    let (b3, _) = run_scheme(&sc, SchemeId::BenchmarkIii).unwrap();
    assert_eq!(b3.traj_s, init.traj_s);
    for (a, b) in b3.user_power.iter().flatten().zip(init.user_power.iter().flatten()) {
        assert_eq!(a, b);
    }
}

#[test]
fn single_user_fixed_geometry_schedules_every_slot() {
    let mut sc = short(10.0);
    sc.num_users = 1;
    sc.user_positions = vec![Position2D::new(-55.0, -10.0)];
    sc.place_endpoints_on_init_circles();
    let (s, _) = run_scheme(&sc, SchemeId::BenchmarkI).unwrap();
    assert!(s.schedule[0].iter().all(|&t| t == 1.0), "{:?}", s.schedule);
}

#[test]
fn runs_are_deterministic() {
    let sc = short(16.0);
    let (a, ta) = run_scheme(&sc, SchemeId::Proposed).unwrap();
    let (b, tb) = run_scheme(&sc, SchemeId::Proposed).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.objectives(), tb.objectives());
}

#[test]
fn unreachable_rate_floor_is_infeasible() {
    let mut sc = short(12.0);
    sc.r_min = 50.0;
    let err = run_scheme(&sc, SchemeId::Proposed).unwrap_err();
    assert!(err.is_infeasible(), "{err}");
}

#[test]
fn iteration_cap_is_respected() {
    let sc = short(20.0);
    let (_, tr) = bcd_solve(&sc, 2).unwrap();
    assert!(tr.iterations.len() <= 2);
}

#[test]
fn warmup_can_be_disabled() {
    let sc = short(20.0);
    let opts = BcdOptions { warmup: false, ..BcdOptions::default() };
    let (s, tr) = run_scheme_with(&sc, SchemeId::Proposed, &opts).unwrap();
    assert!(tr.max_decrease() <= 1e-9);
    assert!(check_feasibility(&s, &sc, FEAS_TOL).overall_feasible);
    // with the warm-up the first iterations leave the powers alone
    let (_, warm) = run_scheme(&sc, SchemeId::Proposed).unwrap();
    let first = &warm.iterations[0];
    assert!(first.blocks.iter().all(|b| b.block != uav_secrecy::subproblems::Block::Power));
    assert!(warm.iterations.iter().any(|it| it.blocks.iter().any(|b| b.block == uav_secrecy::subproblems::Block::Power)));
}

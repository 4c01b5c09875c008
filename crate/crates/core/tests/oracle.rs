use uav_secrecy::optimizer::{init_solution, run_scheme, SchemeId};
use uav_secrecy::oracle::*;
use uav_secrecy::scenario::default_paper_scenario;

#[test]
fn exhaustive_refuses_huge_instances() {
    let rates = vec![vec![1.0; 30]; 3];
    assert!(matches!(exhaustive_schedule_oracle(&rates, 0.0, None), Err(OracleError::TooLarge(_))));
}

#[test]
fn exhaustive_reports_empty_when_floor_unreachable() {
    let rates = vec![vec![0.1, 0.1]];
    assert!(matches!(exhaustive_schedule_oracle(&rates, 1.0, None), Err(OracleError::Empty)));
}

#[test]
fn grid_oracle_finds_cap_vertex() {
    // the legitimate link dominates, so the best point is where the cap meets p_k = p_max
    let inst = SlotInstance {
        gain_sd: 1e-6,
        gain_se: 1e-8,
        gain_je: 1e-6,
        noise: 1e-12,
        p_max: 1.0,
        pj_max: 1.0,
        caps: vec![(1.0, 1.0, 1.5)],
    };
    let g = GridSpec::new(0.0, 1.0, 11).unwrap();
    let (pk, pj, v) = grid_power_oracle(&inst, (&g, &g)).unwrap();
    assert!((pk - 1.0).abs() < 1e-12 && (pj - 0.5).abs() < 1e-12, "{pk} {pj}");
    assert_eq!(v, inst.secrecy(1.0, 0.5));
}

#[test]
fn grid_spec_rejects_bad_ranges() {
    assert!(GridSpec::new(1.0, 0.0, 5).is_err());
    assert!(GridSpec::new(0.0, 1.0, 1).is_err());
}

#[test]
fn monte_carlo_gap_vanishes_without_uncertainty() {
    let sc = default_paper_scenario().with_eve_radius(0.0).unwrap();
    let s = init_solution(&sc).unwrap();
    assert_eq!(monte_carlo_eve_check(&s, &sc, 500, 3), 0.0);
}

#[test]
fn monte_carlo_gap_nonnegative_on_solution() {
    let mut sc = default_paper_scenario();
    sc.eve_center = sc.user_centroid();
    let mut sc = sc.with_period(20.0).unwrap();
    sc.place_endpoints_on_init_circles();
    let (s, _) = run_scheme(&sc, SchemeId::Proposed).unwrap();
    assert!(monte_carlo_eve_check(&s, &sc, 2000, 5) >= 0.0);
}

#[test]
fn fd_check_on_smooth_function() {
    let f = |x: &[f64]| ((x[0] * x[1]).exp() + x[0].ln(), vec![x[1] * (x[0] * x[1]).exp() + 1.0 / x[0], x[0] * (x[0] * x[1]).exp()]);
    assert!(fd_gradient_check(f, &[0.7, 1.3], 1e-6) < 1e-7);
    let wrong = |x: &[f64]| (x[0] * x[0], vec![x[0]]);
    assert!(fd_gradient_check(wrong, &[2.0], 1e-6) > 0.1);
}

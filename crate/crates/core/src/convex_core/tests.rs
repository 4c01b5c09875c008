use super::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quadratic(center: Vec<f64>, weight: f64) -> Box<dyn SmoothFn> {
    // weight * |x - center|^2 (convex for weight > 0, concave for weight < 0)
    smooth(move |x, hess| Eval {
        value: weight * x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>(),
        grad: x.iter().zip(&center).enumerate().map(|(i, (a, c))| (i, 2.0 * weight * (a - c))).collect(),
        hess: if hess { (0..x.len()).map(|i| (i, i, 2.0 * weight)).collect() } else { Vec::new() },
    })
}

#[test]
fn unconstrained_interior_optimum() {
    let mut p = ConvexProgram::new(2);
    p.objective = quadratic(vec![0.0, 0.0], -1.0);
    p.bounds = vec![(-1.0, 1.0); 2];
    p.start = vec![0.5, 0.5];
    let r = solve(&p, 1e-6);
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.x_opt.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x_opt);
    assert!(r.value.abs() < 1e-9);
}

#[test]
fn monotone_objective_hits_upper_bound() {
    let mut p = ConvexProgram::new(1);
    p.objective = smooth(|x, hess| Eval {
        value: x[0].ln_1p(),
        grad: vec![(0, 1.0 / (1.0 + x[0]))],
        hess: if hess { vec![(0, 0, -1.0 / (1.0 + x[0]).powi(2))] } else { Vec::new() },
    });
    p.bounds = vec![(0.0, 2.0)];
    p.start = vec![1.0];
    let r = solve(&p, 1e-6);
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x_opt[0] - 2.0).abs() < 1e-8);
    let (s, f) = check_kkt(&p, &r.x_opt);
    assert!(s <= 1e-6 && f <= 1e-8, "{s} {f}");
}

#[test]
fn concave_quadratic_with_equality_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = 4;
        // f(x) = -1/2 x^T Q x + c^T x, Q = B^T B + I
        let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let q = b.transpose() * &b + DMatrix::identity(n, n);
        let c = DVector::<f64>::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        let a = DVector::<f64>::from_fn(n, |_, _| rng.gen::<f64>() + 0.1);
        let rhs = rng.gen::<f64>();
        // KKT: Q x + a nu = c, a^T x = rhs
        let mut k = DMatrix::<f64>::zeros(n + 1, n + 1);
        k.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            k[(i, n)] = a[i];
            k[(n, i)] = a[i];
        }
        let mut r = DVector::<f64>::zeros(n + 1);
        r.rows_mut(0, n).copy_from(&c);
        r[n] = rhs;
        let sol = k.lu().solve(&r).unwrap();

        let (qc, cc) = (q.clone(), c.clone());
        let mut p = ConvexProgram::new(n);
        p.objective = smooth(move |x, hess| {
            let xv = DVector::from_column_slice(x);
            let qx = &qc * &xv;
            let mut h = Vec::new();
            if hess {
                for i in 0..n {
                    for j in 0..=i {
                        h.push((i, j, -qc[(i, j)]));
                    }
                }
            }
            Eval {
                value: -0.5 * xv.dot(&qx) + cc.dot(&xv),
                grad: (0..n).map(|i| (i, cc[i] - qx[i])).collect(),
                hess: h,
            }
        });
        p.affine_eq = vec![((0..n).map(|i| (i, a[i])).collect(), rhs)];
        let r = solve(&p, 1e-6);
        assert_eq!(r.status, SolveStatus::Optimal);
        for i in 0..n {
            assert!((r.x_opt[i] - sol[i]).abs() < 1e-6, "{} vs {}", r.x_opt[i], sol[i]);
        }
    }
}

#[test]
fn phase_one_recovers_from_infeasible_start() {
    // maximize x + y  s.t. x^2 + y^2 <= 1, start outside the disc
    let mut p = ConvexProgram::new(2);
    p.objective = Box::new(Affine::new(vec![(0, 1.0), (1, 1.0)], 0.0));
    let mut g = quadratic(vec![0.0, 0.0], 1.0);
    let disc = smooth(move |x, h| {
        let mut e = g.eval(x, h);
        e.value -= 1.0;
        e
    });
    g = disc;
    p.convex_ineq.push(g);
    p.start = vec![3.0, -2.0];
    let r = solve(&p, 1e-6);
    assert_eq!(r.status, SolveStatus::Optimal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((r.x_opt[0] - s).abs() < 1e-7 && (r.x_opt[1] - s).abs() < 1e-7);
}

#[test]
fn empty_feasible_set_is_infeasible() {
    let mut p = ConvexProgram::new(1);
    p.objective = Box::new(Affine::new(vec![(0, 1.0)], 0.0));
    p.convex_ineq.push(Box::new(Affine::new(vec![(0, 1.0)], -1.0))); // x <= 1
    p.convex_ineq.push(Box::new(Affine::new(vec![(0, -1.0)], 2.0))); // x >= 2
    let r = solve(&p, 1e-6);
    assert_eq!(r.status, SolveStatus::Infeasible);
}

#[test]
fn never_returns_worse_than_feasible_start() {
    let mut p = ConvexProgram::new(1);
    p.objective = Box::new(Affine::new(vec![(0, 1.0)], 0.0));
    p.bounds = vec![(0.0, 1.0)];
    p.start = vec![1.0];
    let r = solve(&p, 1e-6);
    assert!(r.value >= 1.0 - 1e-12);
}

#[test]
fn check_kkt_reports_bound_violation() {
    let mut p = ConvexProgram::new(2);
    p.objective = quadratic(vec![0.0, 0.0], -1.0);
    p.bounds = vec![(-1.0, 1.0); 2];
    let x = vec![1.1, 0.0];
    let (_, feas) = check_kkt(&p, &x);
    assert!(feas >= 0.1 - 1e-9);
}

#[test]
fn check_kkt_interior_point_is_gradient_norm() {
    let mut p = ConvexProgram::new(3);
    p.objective = quadratic(vec![0.2, -0.1, 0.3], -1.5);
    p.bounds = vec![(-1.0, 1.0); 3];
    let x = vec![0.5, 0.4, -0.2];
    let grad = p.objective.eval(&x, false).grad;
    let norm = grad.iter().map(|g| g.1 * g.1).sum::<f64>().sqrt();
    let (s, f) = check_kkt(&p, &x);
    assert!((s - norm).abs() < 1e-9);
    assert_eq!(f, 0.0);
}

#[test]
fn lp_simplex_corner() {
    let r = solve_lp(&[1.0, 1.0], &[(vec![(0, 1.0), (1, 1.0)], 1.0)], &[], &[(0.0, f64::INFINITY); 2]);
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.value - 1.0).abs() < 1e-8);
    assert!(r.duality_gap <= 1e-8);
}

#[test]
fn lp_zero_objective() {
    let r = solve_lp(&[0.0, 0.0], &[(vec![(0, 1.0), (1, 1.0)], 1.0)], &[], &[(0.0, f64::INFINITY); 2]);
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.value.abs() < 1e-12);
    assert!(r.kkt_feasibility <= 1e-8);
}

#[test]
fn lp_detects_infeasible_and_unbounded() {
    let inf = solve_lp(
        &[1.0],
        &[(vec![(0, 1.0)], -1.0)],
        &[],
        &[(0.0, f64::INFINITY)],
    );
    assert_eq!(inf.status, SolveStatus::Infeasible);
    let unb = solve_lp(&[1.0, 0.0], &[(vec![(1, 1.0)], 1.0)], &[], &[(0.0, f64::INFINITY); 2]);
    assert_eq!(unb.status, SolveStatus::Unbounded);
}

#[test]
fn lp_with_equality_and_fixed_variable() {
    // max x0 + 2 x1 + x2, x0 + x1 = 1, x2 fixed at 0.5, x in [0, 1]
    let r = solve_lp(
        &[1.0, 2.0, 1.0],
        &[],
        &[(vec![(0, 1.0), (1, 1.0)], 1.0)],
        &[(0.0, 1.0), (0.0, 1.0), (0.5, 0.5)],
    );
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.value - 2.5).abs() < 1e-8);
}

#[test]
fn solver_is_deterministic() {
    let build = || {
        let mut p = ConvexProgram::new(3);
        p.objective = quadratic(vec![2.0, -1.0, 0.5], -1.0);
        p.bounds = vec![(-1.0, 1.0); 3];
        p
    };
    assert_eq!(solve(&build(), 1e-6), solve(&build(), 1e-6));
}

/// A chain problem shaped like the trajectory subproblems: consecutive
/// coupling, dense sum constraints and a border epigraph variable.
fn chain_program(n: usize, seed: u64) -> ConvexProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
    let dim = n + 1;
    let eta = n;
    let mut p = ConvexProgram::new(dim);
    p.border = 1;
    p.objective = smooth(move |x, _| Eval { value: x[eta], grad: vec![(eta, 1.0)], hess: Vec::new() });
    // eta <= -(1/n) sum (x_i - target_i)^2
    let tg = targets.clone();
    p.convex_ineq.push(smooth(move |x, hess| {
        let mut v = x[eta];
        let mut grad = vec![(eta, 1.0)];
        let mut h = Vec::new();
        for i in 0..n {
            v += (x[i] - tg[i]).powi(2) / n as f64;
            grad.push((i, 2.0 * (x[i] - tg[i]) / n as f64));
            if hess {
                h.push((i, i, 2.0 / n as f64));
            }
        }
        Eval { value: v, grad, hess: h }
    }));
    // sum x <= n / 4
    p.convex_ineq.push(Box::new(Affine::new((0..n).map(|i| (i, 1.0)).collect(), -(n as f64) / 4.0)));
    // (x_{i+1} - x_i)^2 <= 0.25
    for i in 0..n - 1 {
        p.convex_ineq.push(smooth(move |x, hess| {
            let d = x[i + 1] - x[i];
            Eval {
                value: d * d - 0.25,
                grad: vec![(i, -2.0 * d), (i + 1, 2.0 * d)],
                hess: if hess { vec![(i, i, 2.0), (i + 1, i + 1, 2.0), (i + 1, i, -2.0)] } else { Vec::new() },
            }
        }));
    }
    p.bounds = vec![(-3.0, 3.0); dim];
    p.bounds[0] = (0.0, 0.0);
    p.bounds[eta] = (-100.0, f64::INFINITY);
    p.start = vec![0.0; dim];
    p.start[eta] = -50.0;
    p
}

#[test]
fn structured_newton_on_long_chain() {
    let p = chain_program(300, 3);
    let r = solve(&p, 1e-6);
    assert_eq!(r.status, SolveStatus::Optimal, "{:?}", (r.kkt_stationarity, r.iterations));
    let (s, f) = check_kkt(&p, &r.x_opt);
    assert!(s <= 1e-5 && f <= 1e-8, "{s} {f}");
}

#[test]
fn lp_and_barrier_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let n = 6;
        let c: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.3).collect();
        let rows: Vec<(SparseVec, f64)> =
            (0..4).map(|_| ((0..n).map(|j| (j, rng.gen::<f64>())).collect(), 1.0 + rng.gen::<f64>())).collect();
        let bounds = vec![(0.0, 1.0); n];
        let lp = solve_lp(&c, &rows, &[], &bounds);
        let mut p = ConvexProgram::new(n);
        p.objective = Box::new(Affine::new(c.iter().copied().enumerate().collect(), 0.0));
        p.convex_ineq = rows.iter().map(|(a, b)| Box::new(Affine::new(a.clone(), -b)) as Box<dyn SmoothFn>).collect();
        p.bounds = bounds.clone();
        p.start = vec![0.01; n];
        let br = solve(&p, 1e-6);
        assert_eq!(lp.status, SolveStatus::Optimal);
        assert!((lp.value - br.value).abs() < 1e-7, "{} {}", lp.value, br.value);
        assert!(solve_program_lp(&p).unwrap().value - lp.value == 0.0);
    }
}

/// Brute force over all vertices of a 2-D LP.
fn vertex_oracle(c: [f64; 2], rows: &[([f64; 2], f64)]) -> f64 {
    let mut all = rows.to_vec();
    all.push(([-1.0, 0.0], 0.0));
    all.push(([0.0, -1.0], 0.0));
    all.push(([1.0, 0.0], 5.0));
    all.push(([0.0, 1.0], 5.0));
    let mut best = f64::NEG_INFINITY;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (a, b) = (all[i], all[j]);
            let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (a.1 * b.0[1] - a.0[1] * b.1) / det;
            let y = (a.0[0] * b.1 - a.1 * b.0[0]) / det;
            if all.iter().all(|r| r.0[0] * x + r.0[1] * y <= r.1 + 1e-9) {
                best = best.max(c[0] * x + c[1] * y);
            }
        }
    }
    best
}

proptest! {
    #[test]
    fn lp_matches_vertex_enumeration(c0 in -1.0..1.0f64, c1 in -1.0..1.0f64,
                                     rows in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.5..3.0f64), 1..4)) {
        let rows: Vec<([f64; 2], f64)> = rows.into_iter().map(|(a, b, h)| ([a, b], h)).collect();
        let sparse: Vec<(SparseVec, f64)> = rows.iter().map(|(a, h)| (vec![(0, a[0]), (1, a[1])], *h)).collect();
        let r = solve_lp(&[c0, c1], &sparse, &[], &[(0.0, 5.0); 2]);
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!((r.value - vertex_oracle([c0, c1], &rows)).abs() < 1e-8);
    }

    #[test]
    fn barrier_optimum_passes_kkt_check(cx in -2.0..2.0f64, cy in -2.0..2.0f64, r in 0.3..1.5f64) {
        // maximize -(x-cx)^2 - (y-cy)^2 over the disc of radius r
        let mut p = ConvexProgram::new(2);
        p.objective = quadratic(vec![cx, cy], -1.0);
        let q = quadratic(vec![0.0, 0.0], 1.0);
        p.convex_ineq.push(smooth(move |x, h| { let mut e = q.eval(x, h); e.value -= r * r; e }));
        let sol = solve(&p, 1e-6);
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let (s, f) = check_kkt(&p, &sol.x_opt);
        prop_assert!(s <= 1e-6 && f <= 1e-8, "{} {}", s, f);
        let d = (cx * cx + cy * cy).sqrt();
        let expected = if d <= r { 0.0 } else { -(d - r).powi(2) };
        prop_assert!((sol.value - expected).abs() < 1e-7);
    }
}

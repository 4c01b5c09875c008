//! Independent optimality certificate: fit nonnegative multipliers to the
//! nearly active constraints and report the remaining Lagrangian residual.

use nalgebra::{DMatrix, DVector};

use super::ConvexProgram;

/// Constraints within this distance of their boundary may carry a multiplier.
const NEAR_TOL: f64 = 1e-4;

/// Lawson-Hanson nonnegative least squares: `min |A x - b|` with `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (_, n) = a.shape();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * (1.0 + a.amax() * b.amax());
    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = a.select_columns(&idx);
            let z_sub = match sub.clone().svd(true, true).solve(b, 1e-13) {
                Ok(z) => z,
                Err(_) => return x,
            };
            if z_sub.iter().all(|&v| v > 0.0) {
                for (p, &k) in idx.iter().enumerate() {
                    x[k] = z_sub[p];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (p, &k) in idx.iter().enumerate() {
                if z_sub[p] <= 0.0 {
                    let d = x[k] - z_sub[p];
                    if d > 0.0 {
                        alpha = alpha.min(x[k] / d);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (p, &k) in idx.iter().enumerate() {
                x[k] += alpha * (z_sub[p] - x[k]);
                if x[k] <= 1e-300 {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
        }
    }
    x
}

/// `(stationarity, feasibility)` of `x` for the maximization `program`.
/// Multipliers are fitted by nonnegative least squares over the constraints
/// within `NEAR_TOL` of their boundary, penalizing `lambda_i * slack_i`, so
/// the reported stationarity is the norm of the Lagrangian gradient and the
/// complementarity residuals together. Fixed variables absorb their residual
/// component.
pub fn check_kkt(program: &ConvexProgram, x: &[f64]) -> (f64, f64) {
    let n = program.dim;
    let feasibility = program.max_violation(x);
    let fixed: Vec<bool> = program.bounds.iter().map(|&(l, h)| l >= h).collect();
    let rows: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let mut row_of = vec![usize::MAX; n];
    for (r, &j) in rows.iter().enumerate() {
        row_of[j] = r;
    }

    // residual of the minimization form: grad(-f) + sum lambda_i grad g_i = 0
    let mut rhs = DVector::<f64>::zeros(rows.len());
    for &(i, v) in &program.objective.eval(x, false).grad {
        if !fixed[i] {
            rhs[row_of[i]] += v;
        }
    }
    let mut cols: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut push_col = |entries: &[(usize, f64)], sign: f64, slack: f64| {
        let mut c = DVector::<f64>::zeros(rows.len());
        for &(i, v) in entries {
            if !fixed[i] {
                c[row_of[i]] += sign * v;
            }
        }
        if c.amax() > 0.0 {
            cols.push((c, slack.max(0.0)));
        }
    };
    for g in &program.convex_ineq {
        let e = g.eval(x, false);
        if e.value >= -NEAR_TOL {
            push_col(&e.grad, 1.0, -e.value);
        }
    }
    for (a, _) in &program.affine_eq {
        push_col(a, 1.0, 0.0);
        push_col(a, -1.0, 0.0);
    }
    for &j in &rows {
        let (lo, hi) = program.bounds[j];
        if x[j] - lo <= NEAR_TOL {
            push_col(&[(j, 1.0)], -1.0, x[j] - lo);
        }
        if hi - x[j] <= NEAR_TOL {
            push_col(&[(j, 1.0)], 1.0, hi - x[j]);
        }
    }
    // grad g columns must cancel grad(-f) = -rhs; one extra row per column
    // carries lambda_i * slack_i
    let stationarity = if cols.is_empty() {
        rhs.norm()
    } else {
        let (m, k) = (rows.len(), cols.len());
        let mut a = DMatrix::<f64>::zeros(m + k, k);
        for (c, (col, slack)) in cols.iter().enumerate() {
            a.view_mut((0, c), (m, 1)).copy_from(col);
            a[(m + c, c)] = *slack;
        }
        let b = DVector::from_iterator(m + k, rhs.iter().copied().chain(std::iter::repeat(0.0).take(k)));
        let lam = nnls(&a, &b);
        (&b - a * lam).norm()
    };
    (stationarity, feasibility)
}

//! Mehrotra predictor-corrector interior point method for
//! `max c.x  s.t.  a_i.x <= b_i,  e_j.x = f_j,  lo <= x <= hi`.

use nalgebra::{DMatrix, DVector};

use super::{sparse_dot, SolveReport, SolveStatus, SparseVec};

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-10;
const STEP: f64 = 0.995;
const FREE_REG: f64 = 1e-8;
const DIVERGE: f64 = 1e12;

pub fn solve_lp(
    c: &[f64],
    affine_ineq: &[(SparseVec, f64)],
    affine_eq: &[(SparseVec, f64)],
    bounds: &[(f64, f64)],
) -> SolveReport {
    let n = c.len();
    let fail = |status: SolveStatus, x: Vec<f64>, iters: usize| SolveReport {
        value: c.iter().zip(&x).map(|(a, b)| a * b).sum(),
        x_opt: x,
        status,
        kkt_stationarity: f64::INFINITY,
        kkt_feasibility: f64::INFINITY,
        iterations: iters,
        duality_gap: f64::INFINITY,
    };
    if bounds.iter().any(|&(l, h)| l > h) {
        return fail(SolveStatus::Infeasible, vec![0.0; n], 0);
    }

    // Columns: free user variables, then one slack per inequality.
    let fixed: Vec<bool> = bounds.iter().map(|&(l, h)| l == h).collect();
    let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let mut col_of = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        col_of[j] = k;
    }
    let nf = free.len();
    let m_in = affine_ineq.len();
    let p = affine_eq.len();
    let rows = p + m_in;
    let nz = nf + m_in;

    let mut mat = DMatrix::<f64>::zeros(rows, nz);
    let mut rhs = DVector::<f64>::zeros(rows);
    let all_rows = affine_eq.iter().chain(affine_ineq.iter());
    for (r, (a, b)) in all_rows.enumerate() {
        let mut b = *b;
        for &(j, v) in a {
            if fixed[j] {
                b -= v * bounds[j].0;
            } else {
                mat[(r, col_of[j])] += v;
            }
        }
        rhs[r] = b;
    }
    for k in 0..m_in {
        mat[(p + k, nf + k)] = 1.0;
    }
    let mut cost = DVector::<f64>::zeros(nz);
    let mut lo = vec![f64::NEG_INFINITY; nz];
    let mut hi = vec![f64::INFINITY; nz];
    for (k, &j) in free.iter().enumerate() {
        cost[k] = -c[j];
        lo[k] = bounds[j].0;
        hi[k] = bounds[j].1;
    }
    for k in nf..nz {
        lo[k] = 0.0;
    }
    let has_lo: Vec<bool> = lo.iter().map(|v| v.is_finite()).collect();
    let has_hi: Vec<bool> = hi.iter().map(|v| v.is_finite()).collect();
    let n_comp = has_lo.iter().filter(|&&b| b).count() + has_hi.iter().filter(|&&b| b).count();

    // Start strictly inside the bounds, slacks sized from the row activity.
    let mut z = DVector::<f64>::from_iterator(
        nz,
        (0..nz).map(|k| match (has_lo[k], has_hi[k]) {
            (true, true) => 0.5 * (lo[k] + hi[k]),
            (true, false) => lo[k] + 1.0,
            (false, true) => hi[k] - 1.0,
            (false, false) => 0.0,
        }),
    );
    for k in 0..m_in {
        let act: f64 = (0..nf).map(|j| mat[(p + k, j)] * z[j]).sum();
        z[nf + k] = (rhs[p + k] - act).abs().max(1.0);
    }
    let mut y = DVector::<f64>::zeros(rows);
    let mut zl = DVector::<f64>::from_iterator(nz, has_lo.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut zu = DVector::<f64>::from_iterator(nz, has_hi.iter().map(|&b| if b { 1.0 } else { 0.0 }));

    let b_norm = 1.0 + rhs.amax();
    let c_norm = 1.0 + cost.amax();
    let mut status = SolveStatus::MaxIter;
    let mut iters = 0;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);

    for it in 0..MAX_ITER {
        iters = it;
        let sl = DVector::from_iterator(nz, (0..nz).map(|k| if has_lo[k] { z[k] - lo[k] } else { 1.0 }));
        let su = DVector::from_iterator(nz, (0..nz).map(|k| if has_hi[k] { hi[k] - z[k] } else { 1.0 }));
        let rp = &rhs - &mat * &z;
        let rd = &cost - mat.transpose() * &y - &zl + &zu;
        let comp: f64 = (0..nz).map(|k| sl[k] * zl[k] + su[k] * zu[k]).sum::<f64>();
        let mu = if n_comp > 0 { comp / n_comp as f64 } else { 0.0 };
        let primal = cost.dot(&z);
        let dual = rhs.dot(&y)
            + (0..nz).filter(|&k| has_lo[k]).map(|k| lo[k] * zl[k]).sum::<f64>()
            - (0..nz).filter(|&k| has_hi[k]).map(|k| hi[k] * zu[k]).sum::<f64>();
        let rp_rel = rp.amax() / b_norm;
        let rd_rel = rd.amax() / c_norm;
        let gap = (primal - dual).abs();
        last = (rp_rel, rd_rel, gap);
        if rp_rel <= TOL && rd_rel <= TOL && gap <= TOL * (1.0 + primal.abs()) {
            status = SolveStatus::Optimal;
            break;
        }
        if z.amax() > DIVERGE * (1.0 + b_norm) && rp_rel <= 1e-6 {
            status = SolveStatus::Unbounded;
            break;
        }
        if y.amax() > DIVERGE * c_norm && rd_rel <= 1e-6 {
            status = SolveStatus::Infeasible;
            break;
        }

        let theta_inv = DVector::from_iterator(
            nz,
            (0..nz).map(|k| {
                let mut v = FREE_REG;
                if has_lo[k] {
                    v += zl[k] / sl[k];
                }
                if has_hi[k] {
                    v += zu[k] / su[k];
                }
                v
            }),
        );
        let theta = theta_inv.map(|v| 1.0 / v);
        let mut scaled = mat.clone();
        for k in 0..nz {
            scaled.column_mut(k).scale_mut(theta[k].sqrt());
        }
        let mut normal = &scaled * scaled.transpose();
        let diag_max = (0..rows).map(|r| normal[(r, r)]).fold(0.0, f64::max).max(1.0);
        for r in 0..rows {
            normal[(r, r)] += 1e-14 * diag_max;
        }
        let chol = match normal.clone().cholesky() {
            Some(c) => c,
            None => {
                for r in 0..rows {
                    normal[(r, r)] += 1e-9 * diag_max;
                }
                match normal.cholesky() {
                    Some(c) => c,
                    None => break,
                }
            }
        };

        let direction = |rcl: &DVector<f64>, rcu: &DVector<f64>| {
            let q = DVector::from_iterator(
                nz,
                (0..nz).map(|k| {
                    let mut v = rd[k];
                    if has_lo[k] {
                        v -= rcl[k] / sl[k];
                    }
                    if has_hi[k] {
                        v += rcu[k] / su[k];
                    }
                    v
                }),
            );
            let tq = q.component_mul(&theta);
            let dy = chol.solve(&(&rp + &mat * &tq));
            let dz = (mat.transpose() * &dy - &q).component_mul(&theta);
            let dzl = DVector::from_iterator(
                nz,
                (0..nz).map(|k| if has_lo[k] { (rcl[k] - zl[k] * dz[k]) / sl[k] } else { 0.0 }),
            );
            let dzu = DVector::from_iterator(
                nz,
                (0..nz).map(|k| if has_hi[k] { (rcu[k] + zu[k] * dz[k]) / su[k] } else { 0.0 }),
            );
            (dz, dy, dzl, dzu)
        };
        let steps = |dz: &DVector<f64>, dzl: &DVector<f64>, dzu: &DVector<f64>| {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for k in 0..nz {
                if has_lo[k] {
                    if dz[k] < 0.0 {
                        ap = ap.min(-sl[k] / dz[k]);
                    }
                    if dzl[k] < 0.0 {
                        ad = ad.min(-zl[k] / dzl[k]);
                    }
                }
                if has_hi[k] {
                    if dz[k] > 0.0 {
                        ap = ap.min(su[k] / dz[k]);
                    }
                    if dzu[k] < 0.0 {
                        ad = ad.min(-zu[k] / dzu[k]);
                    }
                }
            }
            (ap, ad)
        };

        let rcl_aff = DVector::from_iterator(nz, (0..nz).map(|k| -sl[k] * zl[k]));
        let rcu_aff = DVector::from_iterator(nz, (0..nz).map(|k| -su[k] * zu[k]));
        let (dz_a, _, dzl_a, dzu_a) = direction(&rcl_aff, &rcu_aff);
        let (ap_a, ad_a) = steps(&dz_a, &dzl_a, &dzu_a);
        let mu_aff = if n_comp > 0 {
            (0..nz)
                .map(|k| {
                    let mut v = 0.0;
                    if has_lo[k] {
                        v += (sl[k] + ap_a * dz_a[k]) * (zl[k] + ad_a * dzl_a[k]);
                    }
                    if has_hi[k] {
                        v += (su[k] - ap_a * dz_a[k]) * (zu[k] + ad_a * dzu_a[k]);
                    }
                    v
                })
                .sum::<f64>()
                / n_comp as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        let rcl = DVector::from_iterator(
            nz,
            (0..nz).map(|k| if has_lo[k] { sigma * mu - sl[k] * zl[k] - dz_a[k] * dzl_a[k] } else { 0.0 }),
        );
        let rcu = DVector::from_iterator(
            nz,
            (0..nz).map(|k| if has_hi[k] { sigma * mu - su[k] * zu[k] + dz_a[k] * dzu_a[k] } else { 0.0 }),
        );
        let (dz, dy, dzl, dzu) = direction(&rcl, &rcu);
        let (ap, ad) = steps(&dz, &dzl, &dzu);
        let (ap, ad) = ((STEP * ap).min(1.0), (STEP * ad).min(1.0));
        z += dz * ap;
        y += dy * ad;
        zl += dzl * ad;
        zu += dzu * ad;
        for k in 0..nz {
            if has_lo[k] {
                z[k] = z[k].max(lo[k] + f64::MIN_POSITIVE);
            }
            if has_hi[k] {
                z[k] = z[k].min(hi[k] - f64::MIN_POSITIVE);
            }
        }
        iters = it + 1;
    }

    let mut x: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    for (k, &j) in free.iter().enumerate() {
        x[j] = z[k];
    }
    if status == SolveStatus::MaxIter {
        let (rp_rel, rd_rel, _) = last;
        if rp_rel > 1e-6 {
            status = SolveStatus::Infeasible;
        } else if rd_rel > 1e-6 && z.amax() > 1e6 * (1.0 + b_norm) {
            status = SolveStatus::Unbounded;
        }
    }
    let value: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    let mut feas: f64 = 0.0;
    for (a, b) in affine_ineq {
        feas = feas.max(sparse_dot(a, &x) - b);
    }
    for (a, b) in affine_eq {
        feas = feas.max((sparse_dot(a, &x) - b).abs());
    }
    for (xi, &(l, h)) in x.iter().zip(bounds) {
        feas = feas.max(l - xi).max(xi - h);
    }
    SolveReport {
        x_opt: x,
        value,
        status,
        kkt_stationarity: last.1 * c_norm,
        kkt_feasibility: feas.max(0.0),
        iterations: iters,
        duality_gap: last.2,
    }
}

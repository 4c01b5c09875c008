//! Primal-dual interior point method on the same barrier stages. Each
//! iteration solves one Newton system with the structure of the barrier
//! Hessian, so the structured factorization carries over unchanged.

use super::barrier::{initial_t, push_inside, Stage};
use super::linalg::{norm_inf, NewtonSystem};
use super::{ConvexProgram, Eval, SolveReport, SolveStatus, SolverOptions};

/// Centering parameter: the target gap is the current gap over this.
const MU: f64 = 10.0;
const STEP_BACK: f64 = 0.99;
const SUFFICIENT: f64 = 0.01;
const PHASE1_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum PdOutcome {
    Converged,
    Phase1Done,
    Stalled,
    MaxIter,
}

/// Constraint values and first-order data at one primal point.
struct Point {
    obj: Eval,
    rows: Vec<Eval>,
}

/// Dual variables: one per convex row and one per finite bound side.
#[derive(Clone)]
struct Duals {
    row: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    eq: Vec<f64>,
}

struct Residual {
    dual: Vec<f64>,
    norm: f64,
}

impl Stage<'_> {
    fn has_lo(&self, j: usize) -> bool {
        !self.fixed[j] && self.lo[j].is_finite()
    }

    fn has_hi(&self, j: usize) -> bool {
        !self.fixed[j] && self.hi[j].is_finite()
    }

    /// First-order data at `x`, or `None` outside the strict interior.
    fn point(&self, x: &[f64], hess: bool) -> Option<Point> {
        for j in 0..self.n {
            if (self.has_lo(j) && !(x[j] > self.lo[j])) || (self.has_hi(j) && !(x[j] < self.hi[j])) {
                return None;
            }
        }
        let obj = self.objective(x, hess);
        if !obj.value.is_finite() {
            return None;
        }
        let mut rows = Vec::with_capacity(self.prog.convex_ineq.len());
        for i in 0..self.prog.convex_ineq.len() {
            let e = self.constraint(i, x, hess);
            if !(e.value < 0.0) {
                return None;
            }
            rows.push(e);
        }
        Some(Point { obj, rows })
    }

    fn residual(&self, x: &[f64], p: &Point, d: &Duals, t: f64) -> Residual {
        let mut dual = vec![0.0; self.n];
        for &(i, v) in &p.obj.grad {
            dual[i] += v;
        }
        let mut cent = 0.0;
        for (e, &l) in p.rows.iter().zip(&d.row) {
            for &(i, v) in &e.grad {
                dual[i] += l * v;
            }
            let c = -l * e.value - 1.0 / t;
            cent += c * c;
        }
        for (k, (a, _)) in self.eq.iter().enumerate() {
            for &(i, v) in a {
                dual[i] += d.eq[k] * v;
            }
        }
        for j in 0..self.n {
            if self.fixed[j] {
                dual[j] = 0.0;
                continue;
            }
            if self.has_lo(j) {
                dual[j] -= d.lo[j];
                let c = d.lo[j] * (x[j] - self.lo[j]) - 1.0 / t;
                cent += c * c;
            }
            if self.has_hi(j) {
                dual[j] += d.hi[j];
                let c = d.hi[j] * (self.hi[j] - x[j]) - 1.0 / t;
                cent += c * c;
            }
        }
        let pri: f64 = self.eq_residual(x).iter().map(|r| r * r).sum();
        let norm = (dual.iter().map(|r| r * r).sum::<f64>() + cent + pri).sqrt();
        Residual { dual, norm }
    }

    fn gap(&self, x: &[f64], p: &Point, d: &Duals) -> f64 {
        let mut g: f64 = p.rows.iter().zip(&d.row).map(|(e, l)| -e.value * l).sum();
        for j in 0..self.n {
            if self.has_lo(j) {
                g += d.lo[j] * (x[j] - self.lo[j]);
            }
            if self.has_hi(j) {
                g += d.hi[j] * (self.hi[j] - x[j]);
            }
        }
        g
    }

    /// Primal-dual Newton direction for centering parameter `t`.
    fn pd_direction(&self, x: &[f64], p: &Point, d: &Duals, t: f64) -> Option<(Vec<f64>, Duals)> {
        let n = self.n;
        let mut rhs = vec![0.0; n];
        let mut sys = NewtonSystem::new(n, self.tail(), self.fixed.clone());
        for &(i, v) in &p.obj.grad {
            rhs[i] -= v;
        }
        for &(i, j, v) in &p.obj.hess {
            sys.add(i, j, v);
        }
        for (e, &l) in p.rows.iter().zip(&d.row) {
            let s = -e.value;
            for &(i, v) in &e.grad {
                rhs[i] -= v / (t * s);
            }
            sys.add_outer(&e.grad, l / s);
            for &(i, j, v) in &e.hess {
                sys.add(i, j, l * v);
            }
        }
        for j in 0..n {
            if self.fixed[j] {
                rhs[j] = 0.0;
                continue;
            }
            if self.has_lo(j) {
                let s = x[j] - self.lo[j];
                rhs[j] += 1.0 / (t * s);
                sys.add(j, j, d.lo[j] / s);
            }
            if self.has_hi(j) {
                let s = self.hi[j] - x[j];
                rhs[j] -= 1.0 / (t * s);
                sys.add(j, j, d.hi[j] / s);
            }
        }
        let fac = sys.factor()?;
        let mut dx = fac.solve(&rhs);
        let nu = self.project_eq(&fac, x, &mut dx)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut dd = Duals { row: Vec::with_capacity(d.row.len()), lo: vec![0.0; n], hi: vec![0.0; n], eq: nu };
        for (e, &l) in p.rows.iter().zip(&d.row) {
            let s = -e.value;
            let gd: f64 = e.grad.iter().map(|&(i, v)| v * dx[i]).sum();
            dd.row.push(-l + 1.0 / (t * s) + l * gd / s);
        }
        for j in 0..n {
            if self.has_lo(j) {
                let s = x[j] - self.lo[j];
                dd.lo[j] = -d.lo[j] + 1.0 / (t * s) - d.lo[j] * dx[j] / s;
            }
            if self.has_hi(j) {
                let s = self.hi[j] - x[j];
                dd.hi[j] = -d.hi[j] + 1.0 / (t * s) + d.hi[j] * dx[j] / s;
            }
        }
        Some((dx, dd))
    }

    fn initial_duals(&self, x: &[f64], p: &Point, t: f64) -> Duals {
        let n = self.n;
        let mut d = Duals {
            row: p.rows.iter().map(|e| 1.0 / (t * -e.value)).collect(),
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            eq: vec![0.0; self.eq.len()],
        };
        for j in 0..n {
            if self.has_lo(j) {
                d.lo[j] = 1.0 / (t * (x[j] - self.lo[j]));
            }
            if self.has_hi(j) {
                d.hi[j] = 1.0 / (t * (self.hi[j] - x[j]));
            }
        }
        d
    }

    /// Run until the duality gap and dual residual are small. Returns the
    /// outcome and the final dual residual (stationarity).
    fn pd_run(&self, x: &mut Vec<f64>, iters: &mut usize, opts: &SolverOptions) -> (PdOutcome, f64, f64) {
        let m = self.num_barrier_terms();
        let Some(p0) = self.point(x, false) else { return (PdOutcome::Stalled, f64::INFINITY, f64::INFINITY) };
        let mut d = self.initial_duals(x, &p0, initial_t(self, x));
        let eq_scale = 1.0 + self.eq.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        loop {
            let Some(p) = self.point(x, true) else { return (PdOutcome::Stalled, f64::INFINITY, f64::INFINITY) };
            if self.phase1 && x[self.n - 1] < -PHASE1_MARGIN {
                return (PdOutcome::Phase1Done, f64::INFINITY, f64::INFINITY);
            }
            let gap = self.gap(x, &p, &d);
            let t = if m == 0 { 1.0 } else { MU * m as f64 / gap.max(f64::MIN_POSITIVE) };
            let res = self.residual(x, &p, &d, t);
            let stat = norm_inf(&res.dual);
            let pri = norm_inf(&self.eq_residual(x));
            if stat <= 1e-2 * opts.tol && gap <= opts.gap_tol && pri <= 1e-12 * eq_scale {
                return (PdOutcome::Converged, stat, gap);
            }
            if *iters >= opts.max_iter {
                return (PdOutcome::MaxIter, stat, gap);
            }
            *iters += 1;
            let Some((dx, dd)) = self.pd_direction(x, &p, &d, t) else { return (PdOutcome::Stalled, stat, gap) };
            // reference residual with the new equality multipliers
            let d_ref = Duals { eq: dd.eq.clone(), ..d.clone() };
            let r0 = self.residual(x, &p, &d_ref, t).norm;
            let mut alpha: f64 = 1.0;
            let clip = |a: f64, v: &[f64], dv: &[f64]| {
                v.iter().zip(dv).filter(|(_, &g)| g < 0.0).fold(a, |a, (&l, &g)| a.min(-STEP_BACK * l / g))
            };
            alpha = clip(alpha, &d.row, &dd.row);
            alpha = clip(alpha, &d.lo, &dd.lo);
            alpha = clip(alpha, &d.hi, &dd.hi);
            alpha = alpha.min(self.max_step(x, &dx));
            let mut xn = x.clone();
            let mut accepted = None;
            while alpha > 1e-14 {
                for j in 0..self.n {
                    xn[j] = x[j] + alpha * dx[j];
                }
                if let Some(pn) = self.point(&xn, false) {
                    let dn = Duals {
                        row: d.row.iter().zip(&dd.row).map(|(l, g)| l + alpha * g).collect(),
                        lo: d.lo.iter().zip(&dd.lo).map(|(l, g)| l + alpha * g).collect(),
                        hi: d.hi.iter().zip(&dd.hi).map(|(l, g)| l + alpha * g).collect(),
                        eq: dd.eq.clone(),
                    };
                    let rn = self.residual(&xn, &pn, &dn, t).norm;
                    if rn <= (1.0 - SUFFICIENT * alpha) * r0 || (rn <= r0 && alpha < 1e-6) {
                        accepted = Some(dn);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(dn) = accepted else { return (PdOutcome::Stalled, stat, gap) };
            std::mem::swap(x, &mut xn);
            d = dn;
        }
    }
}

/// Primal-dual solve with a phase-I start search. The status is `MaxIter`
/// when the method stalls before certifying optimality.
pub(super) fn solve_pd(prog: &ConvexProgram, opts: &SolverOptions) -> SolveReport {
    let n = prog.dim;
    let mut iters = 0;
    let report = |x: Vec<f64>, status: SolveStatus, stat: f64, gap: f64, iters: usize| {
        let value = prog.objective.value(&x);
        let feas = prog.max_violation(&x);
        SolveReport { x_opt: x, value, status, kkt_stationarity: stat, kkt_feasibility: feas, iterations: iters, duality_gap: gap }
    };
    if prog.bounds.iter().any(|&(l, h)| l > h) {
        return report(prog.start.clone(), SolveStatus::Infeasible, f64::INFINITY, f64::INFINITY, 0);
    }
    let stage2 = Stage::new(prog, false);
    let mut x = prog.start.clone();
    push_inside(&mut x, &stage2.lo, &stage2.hi, &stage2.fixed);
    let max_g = prog
        .convex_ineq
        .iter()
        .map(|g| g.value(&x))
        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    if max_g.is_infinite() && max_g > 0.0 {
        return report(x, SolveStatus::Infeasible, f64::INFINITY, f64::INFINITY, 0);
    }
    if max_g >= 0.0 {
        let stage1 = Stage::new(prog, true);
        let mut y = x.clone();
        y.push(max_g + (0.1 * max_g.abs()).max(1e-3));
        let (out, _, _) = stage1.pd_run(&mut y, &mut iters, opts);
        let s = y[n];
        y.truncate(n);
        match out {
            PdOutcome::Phase1Done => {}
            PdOutcome::MaxIter => return report(y, SolveStatus::MaxIter, f64::INFINITY, f64::INFINITY, iters),
            _ if s < 0.0 => {}
            _ => return report(y, SolveStatus::Infeasible, f64::INFINITY, f64::INFINITY, iters),
        }
        x = y;
    }
    let (out, stat, gap) = stage2.pd_run(&mut x, &mut iters, opts);
    let feas = prog.max_violation(&x);
    let status = match out {
        PdOutcome::MaxIter => SolveStatus::MaxIter,
        _ if stat <= opts.tol && gap <= opts.gap_tol.max(1e-8) && feas <= 1e-8 => SolveStatus::Optimal,
        _ => SolveStatus::MaxIter,
    };
    report(x, status, stat, gap, iters)
}

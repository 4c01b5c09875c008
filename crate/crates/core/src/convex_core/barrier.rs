//! Primal log-barrier method with a phase-I feasibility search.

use super::linalg::{dot, norm_inf, Factored, NewtonSystem};
use super::{sparse_dot, ConvexProgram, Eval, SolveReport, SolveStatus, SolverOptions, SparseVec};

const FRACTION_TO_BOUNDARY: f64 = 0.99;
const ARMIJO: f64 = 0.01;
const CENTER_TOL: f64 = 1e-7;
const FINAL_CENTER_TOL: f64 = 1e-16;
/// Phase I stops once every constraint holds with this margin.
const PHASE1_MARGIN: f64 = 1e-7;

/// One barrier problem: the user program, or its phase-I augmentation with an
/// extra trailing variable `s` and constraints `g_i(x) <= s`.
pub(super) struct Stage<'a> {
    pub(super) prog: &'a ConvexProgram,
    pub(super) phase1: bool,
    pub(super) n: usize,
    pub(super) fixed: Vec<bool>,
    pub(super) lo: Vec<f64>,
    pub(super) hi: Vec<f64>,
    pub(super) eq: Vec<(SparseVec, f64)>,
}

enum Outcome {
    Converged,
    Phase1Done,
    MaxIter,
}

struct State {
    t: f64,
    iters: usize,
}

impl<'a> Stage<'a> {
    pub(super) fn new(prog: &'a ConvexProgram, phase1: bool) -> Self {
        let mut lo: Vec<f64> = prog.bounds.iter().map(|b| b.0).collect();
        let mut hi: Vec<f64> = prog.bounds.iter().map(|b| b.1).collect();
        let mut fixed: Vec<bool> = prog.bounds.iter().map(|&(l, h)| l >= h).collect();
        let mut n = prog.dim;
        if phase1 {
            lo.push(-1.0);
            hi.push(f64::INFINITY);
            fixed.push(false);
            n += 1;
        }
        let eq = prog
            .affine_eq
            .iter()
            .map(|(a, b)| {
                let mut b = *b;
                let a: SparseVec = a
                    .iter()
                    .filter(|&&(i, v)| {
                        if fixed[i] {
                            b -= v * lo[i];
                            false
                        } else {
                            true
                        }
                    })
                    .copied()
                    .collect();
                (a, b)
            })
            .collect();
        Self { prog, phase1, n, fixed, lo, hi, eq }
    }

    pub(super) fn tail(&self) -> usize {
        self.prog.border + self.phase1 as usize
    }

    pub(super) fn num_barrier_terms(&self) -> usize {
        let bounds = (0..self.n)
            .filter(|&j| !self.fixed[j])
            .map(|j| self.lo[j].is_finite() as usize + self.hi[j].is_finite() as usize)
            .sum::<usize>();
        self.prog.convex_ineq.len() + bounds
    }

    /// Objective to minimize.
    pub(super) fn objective(&self, x: &[f64], hess: bool) -> Eval {
        if self.phase1 {
            Eval { value: x[self.n - 1], grad: vec![(self.n - 1, 1.0)], hess: Vec::new() }
        } else {
            let mut e = self.prog.objective.eval(x, hess);
            e.value = -e.value;
            e.grad.iter_mut().for_each(|g| g.1 = -g.1);
            e.hess.iter_mut().for_each(|h| h.2 = -h.2);
            e
        }
    }

    pub(super) fn constraint(&self, i: usize, x: &[f64], hess: bool) -> Eval {
        let g = &self.prog.convex_ineq[i];
        if self.phase1 {
            let s = x[self.n - 1];
            let mut e = g.eval(&x[..self.n - 1], hess);
            e.value -= s;
            e.grad.push((self.n - 1, -1.0));
            e
        } else {
            g.eval(x, hess)
        }
    }

    pub(super) fn constraint_value(&self, i: usize, x: &[f64]) -> f64 {
        let g = &self.prog.convex_ineq[i];
        if self.phase1 {
            g.value(&x[..self.n - 1]) - x[self.n - 1]
        } else {
            g.value(x)
        }
    }

    /// Barrier function value, or `None` outside the strict domain.
    /// Also returns a magnitude used to judge rounding noise.
    fn phi(&self, x: &[f64], t: f64) -> Option<(f64, f64)> {
        let f = self.objective(x, false).value;
        if !f.is_finite() {
            return None;
        }
        let mut val = t * f;
        let mut mag = (t * f).abs();
        for i in 0..self.prog.convex_ineq.len() {
            let g = self.constraint_value(i, x);
            if !(g < 0.0) {
                return None;
            }
            let l = (-g).ln();
            val -= l;
            mag += l.abs();
        }
        for j in 0..self.n {
            if self.fixed[j] {
                continue;
            }
            if self.lo[j].is_finite() {
                let d = x[j] - self.lo[j];
                if !(d > 0.0) {
                    return None;
                }
                val -= d.ln();
                mag += d.ln().abs();
            }
            if self.hi[j].is_finite() {
                let d = self.hi[j] - x[j];
                if !(d > 0.0) {
                    return None;
                }
                val -= d.ln();
                mag += d.ln().abs();
            }
        }
        Some((val, mag))
    }

    pub(super) fn eq_residual(&self, x: &[f64]) -> Vec<f64> {
        self.eq.iter().map(|(a, b)| sparse_dot(a, x) - b).collect()
    }

    /// Gradient of the barrier function and the Newton direction.
    fn newton(&self, x: &[f64], t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut grad = vec![0.0; n];
        let mut sys = NewtonSystem::new(n, self.tail(), self.fixed.clone());
        let obj = self.objective(x, true);
        for &(i, v) in &obj.grad {
            grad[i] += t * v;
        }
        for &(i, j, v) in &obj.hess {
            sys.add(i, j, t * v);
        }
        for c in 0..self.prog.convex_ineq.len() {
            let e = self.constraint(c, x, true);
            let ng = -e.value;
            for &(i, v) in &e.grad {
                grad[i] += v / ng;
            }
            sys.add_outer(&e.grad, 1.0 / (ng * ng));
            for &(i, j, v) in &e.hess {
                sys.add(i, j, v / ng);
            }
        }
        for j in 0..n {
            if self.fixed[j] {
                grad[j] = 0.0;
                continue;
            }
            if self.lo[j].is_finite() {
                let d = x[j] - self.lo[j];
                grad[j] -= 1.0 / d;
                sys.add(j, j, 1.0 / (d * d));
            }
            if self.hi[j].is_finite() {
                let d = self.hi[j] - x[j];
                grad[j] += 1.0 / d;
                sys.add(j, j, 1.0 / (d * d));
            }
        }
        let fac = sys.factor()?;
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut dx = fac.solve(&rhs);
        self.project_eq(&fac, x, &mut dx)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((grad, dx))
    }

    /// Correct a Newton direction so the step lands on the affine equalities.
    /// Returns their multipliers.
    pub(super) fn project_eq(&self, fac: &Factored<'_>, x: &[f64], dx: &mut [f64]) -> Option<Vec<f64>> {
        if self.eq.is_empty() {
            return Some(Vec::new());
        }
        let n = self.n;
        let p = self.eq.len();
        let r_eq = self.eq_residual(x);
        let cols: Vec<Vec<f64>> = self
            .eq
            .iter()
            .map(|(a, _)| {
                let mut d = vec![0.0; n];
                for &(i, v) in a {
                    d[i] += v;
                }
                fac.solve(&d)
            })
            .collect();
        let mut m = nalgebra::DMatrix::<f64>::zeros(p, p);
        let mut r = nalgebra::DVector::<f64>::zeros(p);
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] = sparse_dot(&self.eq[a].0, &cols[b]);
            }
            r[a] = sparse_dot(&self.eq[a].0, dx) + r_eq[a];
        }
        let nu = m.clone().cholesky().map(|c| c.solve(&r)).or_else(|| m.lu().solve(&r))?;
        for (b, col) in cols.iter().enumerate() {
            for i in 0..n {
                dx[i] -= nu[b] * col[i];
            }
        }
        Some(nu.iter().copied().collect())
    }

    pub(super) fn max_step(&self, x: &[f64], dx: &[f64]) -> f64 {
        let mut a: f64 = 1.0;
        for j in 0..self.n {
            if self.fixed[j] || dx[j] == 0.0 {
                continue;
            }
            if dx[j] < 0.0 && self.lo[j].is_finite() {
                a = a.min(FRACTION_TO_BOUNDARY * (x[j] - self.lo[j]) / -dx[j]);
            }
            if dx[j] > 0.0 && self.hi[j].is_finite() {
                a = a.min(FRACTION_TO_BOUNDARY * (self.hi[j] - x[j]) / dx[j]);
            }
        }
        a
    }

    /// Run centering steps with an increasing barrier parameter.
    fn run(&self, x: &mut Vec<f64>, st: &mut State, opts: &SolverOptions) -> Outcome {
        let m = self.num_barrier_terms().max(1) as f64;
        loop {
            let final_stage = m / st.t <= opts.gap_tol;
            let tol = if final_stage { FINAL_CENTER_TOL } else { CENTER_TOL };
            let mut final_steps = 0;
            loop {
                if st.iters >= opts.max_iter {
                    return Outcome::MaxIter;
                }
                let Some((grad, dx)) = self.newton(x, st.t) else { break };
                let slope = dot(&grad, &dx);
                let dec2 = -slope;
                let eq_ok = self.eq.is_empty()
                    || norm_inf(&self.eq_residual(x)) <= 1e-12 * (1.0 + self.eq.iter().map(|e| e.1.abs()).fold(0.0, f64::max));
                if eq_ok && dec2 / 2.0 <= tol {
                    break;
                }
                let Some((phi0, mag)) = self.phi(x, st.t) else { break };
                let slack = 1e-13 * (1.0 + mag);
                let mut alpha = self.max_step(x, &dx);
                let mut accepted = false;
                let mut xn = x.clone();
                while alpha > 1e-16 {
                    for j in 0..self.n {
                        xn[j] = x[j] + alpha * dx[j];
                    }
                    if let Some((phi1, _)) = self.phi(&xn, st.t) {
                        // infeasible-start steps shrink the equality residual by (1 - alpha)
                        if !eq_ok || phi1 <= phi0 + ARMIJO * alpha * slope.min(0.0) + slack {
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                st.iters += 1;
                if !accepted {
                    break;
                }
                let moved = alpha * norm_inf(&dx);
                std::mem::swap(x, &mut xn);
                if self.phase1 && x[self.n - 1] < -PHASE1_MARGIN {
                    return Outcome::Phase1Done;
                }
                if moved <= 1e-15 * (1.0 + norm_inf(x)) {
                    break;
                }
                if final_stage {
                    final_steps += 1;
                    if final_steps > 30 {
                        break;
                    }
                }
            }
            if final_stage {
                return Outcome::Converged;
            }
            st.t = (st.t * opts.mu).min(m / opts.gap_tol);
        }
    }

    /// Lagrangian stationarity of the minimization form at `x`. Multipliers
    /// are the barrier duals for parameter `t`, optionally moved along the
    /// Newton step `dx` to first order and clipped at zero; equality
    /// multipliers by least squares.
    pub(super) fn stationarity(&self, x: &[f64], t: f64, dx: Option<&[f64]>) -> f64 {
        let n = self.n;
        let corr = |lam: f64, slack: f64, dg: f64| match dx {
            Some(_) => (lam * (1.0 + dg / slack)).max(0.0),
            None => lam,
        };
        let mut r = vec![0.0; n];
        let obj = self.objective(x, false);
        for &(i, v) in &obj.grad {
            r[i] += v;
        }
        for c in 0..self.prog.convex_ineq.len() {
            let e = self.constraint(c, x, false);
            let slack = (-e.value).max(f64::MIN_POSITIVE);
            let dg = dx.map_or(0.0, |d| e.grad.iter().map(|&(i, v)| v * d[i]).sum());
            let lam = corr(1.0 / (t * slack), slack, dg);
            for &(i, v) in &e.grad {
                r[i] += lam * v;
            }
        }
        for j in 0..n {
            if self.fixed[j] {
                r[j] = 0.0;
                continue;
            }
            let d = dx.map_or(0.0, |d| d[j]);
            if self.lo[j].is_finite() {
                let slack = x[j] - self.lo[j];
                r[j] -= corr(1.0 / (t * slack), slack, -d);
            }
            if self.hi[j].is_finite() {
                let slack = self.hi[j] - x[j];
                r[j] += corr(1.0 / (t * slack), slack, d);
            }
        }
        if !self.eq.is_empty() {
            let p = self.eq.len();
            let mut a = nalgebra::DMatrix::<f64>::zeros(n, p);
            for (k, (row, _)) in self.eq.iter().enumerate() {
                for &(i, v) in row {
                    a[(i, k)] += v;
                }
            }
            let rv = nalgebra::DVector::from_column_slice(&r);
            if let Ok(nu) = a.clone().svd(true, true).solve(&(-&rv), 1e-14) {
                let res = rv + a * nu;
                return res.amax();
            }
        }
        norm_inf(&r)
    }
}

pub(super) fn push_inside(x: &mut [f64], lo: &[f64], hi: &[f64], fixed: &[bool]) {
    for j in 0..x.len() {
        if fixed[j] {
            x[j] = lo[j];
            continue;
        }
        let (l, h) = (lo[j], hi[j]);
        let width = h - l;
        let margin = |b: f64| (1e-6 * b.abs().max(1.0)).min(0.25 * width);
        if !x[j].is_finite() {
            x[j] = if l.is_finite() && h.is_finite() {
                0.5 * (l + h)
            } else if l.is_finite() {
                l + 1.0
            } else if h.is_finite() {
                h - 1.0
            } else {
                0.0
            };
        }
        if l.is_finite() && x[j] <= l + margin(l) * 1e-3 {
            x[j] = l + margin(l);
        }
        if h.is_finite() && x[j] >= h - margin(h) * 1e-3 {
            x[j] = h - margin(h);
        }
    }
}

pub(super) fn solve_barrier(prog: &ConvexProgram, opts: &SolverOptions) -> SolveReport {
    let n = prog.dim;
    let mut st = State { t: 1.0, iters: 0 };
    let infeasible = |x: Vec<f64>, iters: usize| {
        let value = prog.objective.value(&x);
        let feas = prog.max_violation(&x);
        SolveReport {
            x_opt: x,
            value,
            status: SolveStatus::Infeasible,
            kkt_stationarity: f64::INFINITY,
            kkt_feasibility: feas,
            iterations: iters,
            duality_gap: f64::INFINITY,
        }
    };
    if prog.bounds.iter().any(|&(l, h)| l > h) {
        return infeasible(prog.start.clone(), 0);
    }

    let stage2 = Stage::new(prog, false);
    let mut x = prog.start.clone();
    push_inside(&mut x, &stage2.lo, &stage2.hi, &stage2.fixed);

    let max_g = (0..prog.convex_ineq.len())
        .map(|i| prog.convex_ineq[i].value(&x))
        .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    if !max_g.is_finite() && max_g > 0.0 {
        return infeasible(x, 0);
    }
    if max_g >= 0.0 {
        let stage1 = Stage::new(prog, true);
        let s0 = max_g + (0.1 * max_g.abs()).max(1e-3);
        let mut y = x.clone();
        y.push(s0);
        let outcome = stage1.run(&mut y, &mut st, opts);
        let s = y[n];
        y.truncate(n);
        match outcome {
            Outcome::Phase1Done => {}
            Outcome::Converged if s < 0.0 => {}
            Outcome::MaxIter => {
                let mut r = infeasible(y, st.iters);
                r.status = SolveStatus::MaxIter;
                return r;
            }
            _ => return infeasible(y, st.iters),
        }
        x = y;
    }

    st.t = initial_t(&stage2, &x);
    let outcome = stage2.run(&mut x, &mut st, opts);
    let m = stage2.num_barrier_terms() as f64;
    let mut stationarity = stage2.stationarity(&x, st.t, None);
    if let Some((_, dx)) = stage2.newton(&x, st.t) {
        stationarity = stationarity.min(stage2.stationarity(&x, st.t, Some(&dx)));
    }
    let mut value = prog.objective.value(&x);
    let mut feasibility = prog.max_violation(&x);

    // never hand back something worse than a feasible start
    let start_value = prog.objective.value(&prog.start);
    if start_value > value && prog.max_violation(&prog.start) <= 1e-8 {
        let t = st.t;
        let s_start = stage2.stationarity_at_foreign_duals(&prog.start, &x, t);
        x = prog.start.clone();
        value = start_value;
        stationarity = s_start;
        feasibility = prog.max_violation(&x);
    }

    let status = match outcome {
        Outcome::MaxIter => SolveStatus::MaxIter,
        _ if stationarity <= opts.tol && feasibility <= 1e-8 => SolveStatus::Optimal,
        _ => SolveStatus::MaxIter,
    };
    SolveReport {
        x_opt: x,
        value,
        status,
        kkt_stationarity: stationarity,
        kkt_feasibility: feasibility,
        iterations: st.iters,
        duality_gap: m / st.t,
    }
}

impl Stage<'_> {
    /// Stationarity at `x` with the multipliers implied by the barrier point `y`.
    fn stationarity_at_foreign_duals(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        let n = self.n;
        let mut r = vec![0.0; n];
        for &(i, v) in &self.objective(x, false).grad {
            r[i] += v;
        }
        for c in 0..self.prog.convex_ineq.len() {
            let gy = self.constraint_value(c, y);
            let lam = 1.0 / (t * (-gy).max(f64::MIN_POSITIVE));
            for &(i, v) in &self.constraint(c, x, false).grad {
                r[i] += lam * v;
            }
        }
        for j in 0..n {
            if self.fixed[j] {
                r[j] = 0.0;
                continue;
            }
            if self.lo[j].is_finite() {
                r[j] -= 1.0 / (t * (y[j] - self.lo[j]));
            }
            if self.hi[j].is_finite() {
                r[j] += 1.0 / (t * (self.hi[j] - y[j]));
            }
        }
        norm_inf(&r)
    }
}

/// Barrier weight that best balances objective and barrier gradients.
pub(super) fn initial_t(stage: &Stage<'_>, x: &[f64]) -> f64 {
    let n = stage.n;
    let mut c = vec![0.0; n];
    for &(i, v) in &stage.objective(x, false).grad {
        c[i] += v;
    }
    let mut d = vec![0.0; n];
    for k in 0..stage.prog.convex_ineq.len() {
        let e = stage.constraint(k, x, false);
        for &(i, v) in &e.grad {
            d[i] += v / -e.value;
        }
    }
    for j in 0..n {
        if stage.fixed[j] {
            c[j] = 0.0;
            d[j] = 0.0;
            continue;
        }
        if stage.lo[j].is_finite() {
            d[j] -= 1.0 / (x[j] - stage.lo[j]);
        }
        if stage.hi[j].is_finite() {
            d[j] += 1.0 / (stage.hi[j] - x[j]);
        }
    }
    let cc = dot(&c, &c);
    if cc <= 0.0 {
        return 1.0;
    }
    let t = -dot(&c, &d) / cc;
    if t.is_finite() && t > 0.0 {
        t.clamp(1e-2, 1e6)
    } else {
        1.0
    }
}

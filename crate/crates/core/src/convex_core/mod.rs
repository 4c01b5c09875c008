//! Self-contained convex solvers: a primal log-barrier interior point method for
//! smooth concave maximization over convex sets, and a Mehrotra primal-dual
//! method for linear programs. Both report KKT residuals so callers can verify
//! the result independently.
//!
//! Functions expose their value, a sparse gradient and lower-triangle Hessian
//! triplets. The Newton systems exploit the slot-major variable layout used by
//! the subproblem builders: banded coupling between neighbouring slots, a few
//! trailing "border" variables and a handful of dense constraint rows.

mod barrier;
mod kkt;
mod linalg;
mod lp;
mod pdip;

use serde::{Deserialize, Serialize};

pub use kkt::{check_kkt, nnls};
pub use lp::solve_lp;

pub type SparseVec = Vec<(usize, f64)>;

/// Value, sparse gradient and (optionally) Hessian of a scalar function.
/// Hessian triplets are `(i, j, v)` with `i >= j`; duplicates are summed and
/// the upper triangle is implied by symmetry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Eval {
    pub value: f64,
    pub grad: SparseVec,
    pub hess: Vec<(usize, usize, f64)>,
}

pub trait SmoothFn: Send + Sync {
    fn eval(&self, x: &[f64], hessian: bool) -> Eval;

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, false).value
    }

    fn as_affine(&self) -> Option<&Affine> {
        None
    }
}

/// `coeffs . x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub coeffs: SparseVec,
    pub constant: f64,
}

impl Affine {
    pub fn new(coeffs: SparseVec, constant: f64) -> Self {
        Self { coeffs, constant }
    }
}

impl SmoothFn for Affine {
    fn eval(&self, x: &[f64], _hessian: bool) -> Eval {
        Eval { value: self.value(x), grad: self.coeffs.clone(), hess: Vec::new() }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }

    fn as_affine(&self) -> Option<&Affine> {
        Some(self)
    }
}

/// Adapter turning a closure into a [`SmoothFn`].
pub struct Closure<F>(pub F);

impl<F> SmoothFn for Closure<F>
where
    F: Fn(&[f64], bool) -> Eval + Send + Sync,
{
    fn eval(&self, x: &[f64], hessian: bool) -> Eval {
        (self.0)(x, hessian)
    }
}

pub fn smooth<F>(f: F) -> Box<dyn SmoothFn>
where
    F: Fn(&[f64], bool) -> Eval + Send + Sync + 'static,
{
    Box::new(Closure(f))
}

/// Maximize a concave objective subject to `a . x = b`, convex `g(x) <= 0` and
/// box bounds.
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: Box<dyn SmoothFn>,
    pub affine_eq: Vec<(SparseVec, f64)>,
    pub convex_ineq: Vec<Box<dyn SmoothFn>>,
    pub bounds: Vec<(f64, f64)>,
    pub start: Vec<f64>,
    /// Number of trailing variables that couple to many others (epigraph
    /// variables). Purely a performance hint for the Newton solver.
    pub border: usize,
}

impl std::fmt::Debug for ConvexProgram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvexProgram")
            .field("dim", &self.dim)
            .field("affine_eq", &self.affine_eq.len())
            .field("convex_ineq", &self.convex_ineq.len())
            .field("border", &self.border)
            .finish()
    }
}

/// Data of a linear program `max c.x` extracted from an all-affine program.
#[derive(Debug, Clone)]
pub struct LpData {
    pub c: Vec<f64>,
    pub ineq: Vec<(SparseVec, f64)>,
    pub eq: Vec<(SparseVec, f64)>,
    pub bounds: Vec<(f64, f64)>,
}

impl ConvexProgram {
    /// Program with a zero objective, free variables and a zero start.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            objective: Box::new(Affine::new(Vec::new(), 0.0)),
            affine_eq: Vec::new(),
            convex_ineq: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
            start: vec![0.0; dim],
            border: 0,
        }
    }

    /// Largest violation over inequalities, equalities and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for g in &self.convex_ineq {
            let gv = g.value(x);
            v = v.max(if gv.is_nan() { f64::INFINITY } else { gv });
        }
        for (a, b) in &self.affine_eq {
            v = v.max((sparse_dot(a, x) - b).abs());
        }
        for (xi, &(lo, hi)) in x.iter().zip(&self.bounds) {
            v = v.max(lo - xi).max(xi - hi);
        }
        v.max(0.0)
    }

    /// Worst midpoint-convexity defect at the pair `(x, y)`: positive when the
    /// objective fails concavity or a constraint fails convexity.
    pub fn midpoint_defect(&self, x: &[f64], y: &[f64]) -> f64 {
        let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
        let f = |h: &dyn SmoothFn| (h.value(x), h.value(y), h.value(&mid));
        let (fx, fy, fm) = f(self.objective.as_ref());
        let mut worst = 0.5 * (fx + fy) - fm;
        for g in &self.convex_ineq {
            let (gx, gy, gm) = f(g.as_ref());
            worst = worst.max(gm - 0.5 * (gx + gy));
        }
        worst
    }

    /// Linear-program view when the objective and all constraints are affine.
    pub fn lp_data(&self) -> Option<LpData> {
        let obj = self.objective.as_affine()?;
        let mut c = vec![0.0; self.dim];
        for &(i, a) in &obj.coeffs {
            c[i] += a;
        }
        let ineq = self
            .convex_ineq
            .iter()
            .map(|g| g.as_affine().map(|a| (a.coeffs.clone(), -a.constant)))
            .collect::<Option<Vec<_>>>()?;
        Some(LpData { c, ineq, eq: self.affine_eq.clone(), bounds: self.bounds.clone() })
    }
}

pub(crate) fn sparse_dot(a: &SparseVec, x: &[f64]) -> f64 {
    a.iter().map(|&(i, v)| v * x[i]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_opt: Vec<f64>,
    pub value: f64,
    pub status: SolveStatus,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub iterations: usize,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stationarity tolerance of the returned point.
    pub tol: f64,
    /// Newton-step budget.
    pub max_iter: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Stop once the barrier duality gap `m / t` is below this.
    pub gap_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 5000, mu: 20.0, gap_tol: 1e-9 }
    }
}

/// Maximize `program` with the default options and the given tolerance.
pub fn solve(program: &ConvexProgram, tol: f64) -> SolveReport {
    solve_with(program, &SolverOptions { tol, ..SolverOptions::default() })
}

/// Primal-dual interior point first; the plain barrier method is the
/// fallback when that stalls.
pub fn solve_with(program: &ConvexProgram, opts: &SolverOptions) -> SolveReport {
    let pd = pdip::solve_pd(program, opts);
    let mut rep = if pd.status == SolveStatus::Optimal {
        pd
    } else {
        let budget = SolverOptions { max_iter: opts.max_iter.saturating_sub(pd.iterations).max(50), ..*opts };
        let mut b = barrier::solve_barrier(program, &budget);
        b.iterations += pd.iterations;
        let pd_usable = pd.kkt_feasibility <= 1e-8 && pd.status != SolveStatus::Infeasible;
        if b.status != SolveStatus::Optimal && pd_usable && (b.kkt_feasibility > 1e-8 || pd.value > b.value) {
            SolveReport { iterations: b.iterations, ..pd }
        } else {
            b
        }
    };
    // never hand back something worse than a feasible start
    let start_value = program.objective.value(&program.start);
    if rep.status != SolveStatus::Infeasible && start_value > rep.value && program.max_violation(&program.start) <= 1e-8 {
        rep.x_opt = program.start.clone();
        rep.value = start_value;
        rep.kkt_feasibility = program.max_violation(&program.start);
    }
    rep
}

/// Solve an all-affine program with the LP method.
pub fn solve_program_lp(program: &ConvexProgram) -> Option<SolveReport> {
    let lp = program.lp_data()?;
    Some(solve_lp(&lp.c, &lp.ineq, &lp.eq, &lp.bounds))
}

#[cfg(test)]
mod tests;

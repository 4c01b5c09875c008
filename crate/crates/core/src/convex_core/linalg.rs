//! Structured symmetric positive definite solves for Newton systems of the form
//! `S + U U^T`, where `S` is banded over the leading "body" variables with a
//! small dense border of trailing variables and `U` holds a few dense columns.

use nalgebra::{DMatrix, DVector};

use super::SparseVec;

/// Gradients whose body indices span more than this go into the low-rank part.
const WIDE_SPAN: usize = 48;
/// Above this size a failed structured solve is not retried densely.
const DENSE_FALLBACK_MAX: usize = 2500;

#[derive(Debug, Clone)]
pub(crate) struct BandChol {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandChol {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Factor a band matrix given as lower-row storage with the same layout.
    fn factor(n: usize, bw: usize, mut a: Vec<f64>) -> Option<Self> {
        let w = bw + 1;
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let j0 = j.saturating_sub(bw).max(i0);
                let mut s = a[i * w + (j + bw - i)];
                for p in j0..j {
                    s -= a[i * w + (p + bw - i)] * a[j * w + (p + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    a[i * w + bw] = s.sqrt();
                } else {
                    a[i * w + (j + bw - i)] = s / a[j * w + bw];
                }
            }
        }
        Some(Self { n, bw, l: a })
    }
}

/// Accumulates a symmetric Newton matrix. Rows flagged `fixed` are replaced by
/// identity rows, which pins those coordinates of every solution to the rhs.
#[derive(Debug, Clone)]
pub(crate) struct NewtonSystem {
    n: usize,
    tail: usize,
    fixed: Vec<bool>,
    trip: Vec<(usize, usize, f64)>,
    cols: Vec<SparseVec>,
}

impl NewtonSystem {
    pub fn new(n: usize, tail: usize, fixed: Vec<bool>) -> Self {
        let mut trip = Vec::with_capacity(8 * n);
        for (i, &f) in fixed.iter().enumerate() {
            if f {
                trip.push((i, i, 1.0));
            }
        }
        Self { n, tail: tail.min(n), fixed, trip, cols: Vec::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 || self.fixed[i] || self.fixed[j] {
            return;
        }
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.trip.push((i, j, v));
    }

    /// Add `w * g g^T` for `w > 0`.
    pub fn add_outer(&mut self, g: &SparseVec, w: f64) {
        let body_end = self.n - self.tail;
        let mut lo = usize::MAX;
        let mut hi = 0;
        for &(i, _) in g {
            if i < body_end && !self.fixed[i] {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
        if lo != usize::MAX && hi - lo > WIDE_SPAN {
            let s = w.sqrt();
            let col: SparseVec = g
                .iter()
                .filter(|(i, v)| !self.fixed[*i] && *v != 0.0)
                .map(|&(i, v)| (i, s * v))
                .collect();
            self.cols.push(col);
            return;
        }
        for (a, &(i, vi)) in g.iter().enumerate() {
            for &(j, vj) in &g[..=a] {
                if i == j {
                    self.add(i, i, w * vi * vj);
                } else {
                    // both orderings collapse onto the lower triangle
                    self.add(i, j, w * vi * vj);
                }
            }
        }
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.trip {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        for c in &self.cols {
            let d: f64 = c.iter().map(|&(i, v)| v * x[i]).sum();
            for &(i, v) in c {
                y[i] += v * d;
            }
        }
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, v) in &self.trip {
            if i == j {
                d[i] += v;
            }
        }
        for c in &self.cols {
            for &(i, v) in c {
                d[i] += v * v;
            }
        }
        d
    }

    pub fn factor(&self) -> Option<Factored<'_>> {
        let d = self.diagonal();
        let scale: Vec<f64> = d.iter().map(|&v| if v > 0.0 && v.is_finite() { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let structured = (0..6).find_map(|k| {
            let reg = if k == 0 { 0.0 } else { 10f64.powi(-14 + 2 * k) };
            StructuredFactor::build(self, &scale, reg)
        });
        let inner = match structured {
            Some(f) => Inner::Structured(f),
            None if self.n <= DENSE_FALLBACK_MAX => {
                Inner::Dense(self.dense_factor(&scale)?)
            }
            None => return None,
        };
        Some(Factored { sys: self, scale, inner })
    }

    fn dense_factor(&self, scale: &[f64]) -> Option<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>> {
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for &(i, j, v) in &self.trip {
            let v = v * scale[i] * scale[j];
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        for c in &self.cols {
            for &(i, vi) in c {
                for &(j, vj) in c {
                    m[(i, j)] += vi * vj * scale[i] * scale[j];
                }
            }
        }
        for k in 0..8 {
            let reg = if k == 0 { 0.0 } else { 10f64.powi(-14 + 2 * k) };
            let mut mk = m.clone();
            for i in 0..n {
                mk[(i, i)] += reg;
            }
            if let Some(c) = mk.cholesky() {
                return Some(c);
            }
        }
        None
    }
}

/// Rank-one update `D + p p^T = Lt D' Lt^T` of a diagonal matrix, where
/// `Lt = I + strict_lower(p beta^T)` is applied in O(n).
struct RankOne {
    p: Vec<f64>,
    beta: Vec<f64>,
}

impl RankOne {
    /// Update `d` in place and return the special factor.
    fn update(d: &mut [f64], p: Vec<f64>) -> Option<Self> {
        let mut a = 1.0;
        let mut beta = vec![0.0; d.len()];
        for j in 0..d.len() {
            let pj = p[j];
            let dbar = d[j] + a * pj * pj;
            if !(dbar > 0.0) || !dbar.is_finite() {
                return None;
            }
            beta[j] = pj * a / dbar;
            a *= d[j] / dbar;
            d[j] = dbar;
        }
        Some(Self { p, beta })
    }

    fn forward(&self, y: &mut [f64]) {
        let mut acc = 0.0;
        for j in 0..y.len() {
            y[j] -= self.p[j] * acc;
            acc += self.beta[j] * y[j];
        }
    }

    fn backward(&self, y: &mut [f64]) {
        let mut acc = 0.0;
        for j in (0..y.len()).rev() {
            y[j] -= self.beta[j] * acc;
            acc += self.p[j] * y[j];
        }
    }
}

/// `S = L L^T` with `L` banded over the body plus a dense border, followed by
/// product-form rank-one updates for the wide columns.
struct StructuredFactor {
    nb: usize,
    band: BandChol,
    /// `L_A^{-1} B`, body x tail.
    w: DMatrix<f64>,
    schur: Option<DMatrix<f64>>,
    updates: Vec<RankOne>,
    d: Vec<f64>,
}

impl BandChol {
    fn forward(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let mut s = x[i];
            for p in i.saturating_sub(self.bw)..i {
                s -= self.l[self.at(i, p)] * x[p];
            }
            x[i] = s / self.l[self.at(i, i)];
        }
    }

    fn backward(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for q in (i + 1)..self.n.min(i + self.bw + 1) {
                s -= self.l[self.at(q, i)] * x[q];
            }
            x[i] = s / self.l[self.at(i, i)];
        }
    }
}

impl StructuredFactor {
    fn build(sys: &NewtonSystem, scale: &[f64], reg: f64) -> Option<Self> {
        let n = sys.n;
        let t = sys.tail;
        let nb = n - t;
        let mut bw = 0;
        for &(i, j, _) in &sys.trip {
            if i < nb {
                bw = bw.max(i - j);
            }
        }
        let w = bw + 1;
        let mut a = vec![0.0; nb * w];
        let mut b = DMatrix::<f64>::zeros(nb, t);
        let mut c = DMatrix::<f64>::zeros(t, t);
        for &(i, j, v) in &sys.trip {
            let v = v * scale[i] * scale[j];
            if i < nb {
                a[i * w + (j + bw - i)] += v;
            } else if j < nb {
                b[(j, i - nb)] += v;
            } else {
                c[(i - nb, j - nb)] += v;
                if i != j {
                    c[(j - nb, i - nb)] += v;
                }
            }
        }
        for i in 0..nb {
            a[i * w + bw] += reg;
        }
        let band = BandChol::factor(nb, bw, a)?;
        let mut wm = b;
        for k in 0..t {
            let mut col: Vec<f64> = wm.column(k).iter().copied().collect();
            band.forward(&mut col);
            wm.column_mut(k).copy_from_slice(&col);
        }
        let schur = if t > 0 {
            let mut sc = c - wm.transpose() * &wm;
            for i in 0..t {
                sc[(i, i)] += reg;
            }
            Some(sc.cholesky()?.unpack())
        } else {
            None
        };
        let mut f = Self { nb, band, w: wm, schur, updates: Vec::new(), d: vec![1.0; n] };
        for col in &sys.cols {
            let mut p = vec![0.0; n];
            for &(i, v) in col {
                p[i] += v * scale[i];
            }
            f.forward(&mut p);
            for u in &f.updates {
                u.forward(&mut p);
            }
            if p.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let upd = RankOne::update(&mut f.d, p)?;
            f.updates.push(upd);
        }
        Some(f)
    }

    /// `y <- L^{-1} y` for the bordered band factor.
    fn forward(&self, y: &mut [f64]) {
        let nb = self.nb;
        self.band.forward(&mut y[..nb]);
        if let Some(lc) = &self.schur {
            let yb = DVector::from_column_slice(&y[..nb]);
            let mut yt = DVector::from_column_slice(&y[nb..]) - self.w.transpose() * yb;
            lc.solve_lower_triangular_mut(&mut yt);
            y[nb..].copy_from_slice(yt.as_slice());
        }
    }

    /// `y <- L^{-T} y`.
    fn backward(&self, y: &mut [f64]) {
        let nb = self.nb;
        if let Some(lc) = &self.schur {
            let mut yt = DVector::from_column_slice(&y[nb..]);
            lc.tr_solve_lower_triangular_mut(&mut yt);
            let corr = &self.w * &yt;
            for i in 0..nb {
                y[i] -= corr[i];
            }
            y[nb..].copy_from_slice(yt.as_slice());
        }
        self.band.backward(&mut y[..nb]);
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut y = r.to_vec();
        self.forward(&mut y);
        for u in &self.updates {
            u.forward(&mut y);
        }
        for (yi, di) in y.iter_mut().zip(&self.d) {
            *yi /= di;
        }
        for u in self.updates.iter().rev() {
            u.backward(&mut y);
        }
        self.backward(&mut y);
        y
    }
}

enum Inner {
    Structured(StructuredFactor),
    Dense(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>),
}

pub(crate) struct Factored<'a> {
    sys: &'a NewtonSystem,
    scale: Vec<f64>,
    inner: Inner,
}

impl Factored<'_> {
    fn raw_solve(&self, r: &[f64]) -> Vec<f64> {
        let rs: Vec<f64> = r.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let y = match &self.inner {
            Inner::Structured(f) => f.solve(&rs),
            Inner::Dense(c) => c.solve(&DVector::from_vec(rs)).as_slice().to_vec(),
        };
        y.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }

    /// Solve `H x = r` with two rounds of iterative refinement.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut x = self.raw_solve(r);
        for _ in 0..2 {
            let hx = self.sys.matvec(&x);
            let res: Vec<f64> = r.iter().zip(&hx).map(|(a, b)| a - b).collect();
            let rn = norm_inf(&res);
            if rn == 0.0 || rn <= 1e-15 * norm_inf(r) {
                break;
            }
            let dx = self.raw_solve(&res);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

//! Dense primal active-set solver for strictly convex QPs
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  lower <= x <= upper
//!                 G x <= h
//! ```
//!
//! `H` is factored once (Cholesky); each working-set change solves a small
//! Schur complement system in the range space of `H`. Ties in the blocking
//! and dropping rules are broken towards the lowest constraint index, so the
//! iteration sequence is a pure function of the inputs.
//!
//! Variables with `lower == upper` are eliminated before solving.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// General inequality rows `G x <= h`, `m x n`.
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

impl QpProblem {
    /// Box-constrained problem.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            lower,
            upper,
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.ineq_matrix = matrix;
        self.ineq_rhs = rhs;
        self
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_inequalities(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest violation of the box and inequality rows (0 if feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..x.len() {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        if self.num_inequalities() > 0 {
            let r = &self.ineq_matrix * x - &self.ineq_rhs;
            v = v.max(r.max());
        }
        v.max(0.0)
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        if self.h.shape() != (n, n) || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(format!(
                "H is {:?}, g has {n}, bounds have {}/{}",
                self.h.shape(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.ineq_matrix.nrows() != self.ineq_rhs.len() || self.ineq_matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "G is {:?} with {} right-hand sides",
                self.ineq_matrix.shape(),
                self.ineq_rhs.len()
            )));
        }
        let scale = self.h.amax().max(1.0);
        if (&self.h - self.h.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("H", "not symmetric"));
        }
        for i in 0..n {
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] > self.upper[i] {
                return Err(invalid("bounds", format!("lower[{i}] > upper[{i}]")));
            }
        }
        if self
            .g
            .iter()
            .chain(self.h.iter())
            .chain(self.ineq_matrix.iter())
            .chain(self.ineq_rhs.iter())
            .any(|v| !v.is_finite())
        {
            return Err(invalid("problem", "non-finite data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub kkt_residual: f64,
    /// Number of constraints in the final working set (including eliminated variables).
    pub active_set_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Inequality rows `a_i' x <= b_i` of the reduced problem, ordered
/// `upper_0, lower_0, upper_1, lower_1, ..., general rows`.
struct Rows {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Rows {
    fn build(
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        g: &DMatrix<f64>,
        h: &DVector<f64>,
    ) -> Self {
        let n = lower.len();
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for j in 0..n {
            if upper[j].is_finite() {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                rows.push((e, upper[j]));
            }
            if lower[j].is_finite() {
                let mut e = DVector::zeros(n);
                e[j] = -1.0;
                rows.push((e, -lower[j]));
            }
        }
        for i in 0..g.nrows() {
            rows.push((g.row(i).transpose(), h[i]));
        }
        let m = rows.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for (i, (r, rhs)) in rows.into_iter().enumerate() {
            a.set_row(i, &r.transpose());
            b[i] = rhs;
        }
        Self { a, b }
    }

    fn len(&self) -> usize {
        self.b.len()
    }

    fn max_violation(&self, x: &DVector<f64>) -> f64 {
        if self.len() == 0 {
            return 0.0;
        }
        (&self.a * x - &self.b).max().max(0.0)
    }
}

struct ActiveSetResult {
    x: DVector<f64>,
    iterations: usize,
    working: Vec<usize>,
    converged: bool,
}

fn solve_equality_qp(
    chol: &Cholesky<f64, Dyn>,
    hinv_g: &DVector<f64>,
    rows: &Rows,
    working: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    if working.is_empty() {
        return Some((-hinv_g, DVector::zeros(0)));
    }
    let n = hinv_g.len();
    let k = working.len();
    let mut aw = DMatrix::zeros(k, n);
    let mut bw = DVector::zeros(k);
    for (r, &i) in working.iter().enumerate() {
        aw.set_row(r, &rows.a.row(i));
        bw[r] = rows.b[i];
    }
    let y = chol.solve(&aw.transpose());
    let s = &aw * &y;
    let rhs = -(&bw + &aw * hinv_g);
    let mu = s.lu().solve(&rhs)?;
    let x = -hinv_g - &y * &mu;
    Some((x, mu))
}

fn active_set(
    chol: &Cholesky<f64, Dyn>,
    g: &DVector<f64>,
    rows: &Rows,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> ActiveSetResult {
    let hinv_g = chol.solve(g);
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; rows.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let Some((x_eq, mu)) = solve_equality_qp(chol, &hinv_g, rows, &working) else {
            break;
        };
        let p = &x_eq - &x;
        let step_tol = 1e-13 * (1.0 + x.amax());
        if p.amax() <= step_tol {
            // stationary on the working set: drop the most negative multiplier
            let mut drop: Option<(usize, f64)> = None;
            for (r, &m) in mu.iter().enumerate() {
                if m < -tol * 1e-2 && drop.is_none_or(|(_, best)| m < best) {
                    drop = Some((r, m));
                }
            }
            match drop {
                None => {
                    x = x_eq;
                    converged = true;
                    break;
                }
                Some((r, _)) => {
                    in_working[working[r]] = false;
                    working.remove(r);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for (i, &active) in in_working.iter().enumerate() {
            if active {
                continue;
            }
            let ap = rows.a.row(i).dot(&p.transpose());
            if ap > 1e-14 * (1.0 + p.amax()) {
                let slack = rows.b[i] - rows.a.row(i).dot(&x.transpose());
                let ratio = (slack / ap).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        x += &p * alpha;
        if let Some(i) = blocking {
            in_working[i] = true;
            working.push(i);
        }
    }
    ActiveSetResult {
        x,
        iterations,
        working,
        converged,
    }
}

/// Finds a point satisfying the box and general rows, or `None` if the rows
/// cannot be satisfied within `tol`.
fn phase_one(
    rows: &Rows,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x_start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Option<DVector<f64>> {
    // minimise s + eps/2 (|x - x_start|^2 + s^2) with a' x - s <= b, s >= 0
    let n = x_start.len();
    let eps = 1e-6;
    let h = DMatrix::from_diagonal_element(n + 1, n + 1, eps);
    let mut g = DVector::zeros(n + 1);
    for j in 0..n {
        g[j] = -eps * x_start[j];
    }
    g[n] = 1.0;
    let general = rows.len()
        - (0..n)
            .map(|j| upper[j].is_finite() as usize + lower[j].is_finite() as usize)
            .sum::<usize>();
    let first_general = rows.len() - general;
    let mut ga = DMatrix::zeros(general, n + 1);
    let mut gb = DVector::zeros(general);
    for r in 0..general {
        let i = first_general + r;
        for j in 0..n {
            ga[(r, j)] = rows.a[(i, j)];
        }
        ga[(r, n)] = -1.0;
        gb[r] = rows.b[i];
    }
    let mut lo = DVector::from_element(n + 1, 0.0);
    let mut hi = DVector::from_element(n + 1, f64::INFINITY);
    lo.rows_mut(0, n).copy_from(lower);
    hi.rows_mut(0, n).copy_from(upper);
    let aug = Rows::build(&lo, &hi, &ga, &gb);
    let s0 = rows.max_violation(x_start) + 1.0;
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(x_start);
    z0[n] = s0;
    let chol = Cholesky::new(h)?;
    let res = active_set(
        &chol,
        &g,
        &aug,
        z0,
        tol,
        max_iter.max(4 * (n + 1 + aug.len())),
    );
    let x = res.x.rows(0, n).into_owned();
    (rows.max_violation(&x) <= tol).then_some(x)
}

/// Solves the QP. Returns an error for malformed or non-convex problems;
/// infeasible general rows and iteration limits are reported via `status`.
pub fn solve(
    p: &QpProblem,
    warm_start: Option<&DVector<f64>>,
    settings: &QpSettings,
) -> Result<QpSolution> {
    p.check()?;
    let n = p.dim();
    let h = (&p.h + p.h.transpose()) * 0.5;

    let fixed: Vec<bool> = (0..n).map(|j| p.lower[j] == p.upper[j]).collect();
    let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let nf = free.len();
    let mut x_full = DVector::zeros(n);
    for j in 0..n {
        if fixed[j] {
            x_full[j] = p.lower[j];
        }
    }

    // reduced data over the free variables
    let hf = DMatrix::from_fn(nf, nf, |r, c| h[(free[r], free[c])]);
    let gf = DVector::from_fn(nf, |r, _| {
        let j = free[r];
        p.g[j]
            + (0..n)
                .filter(|&k| fixed[k])
                .map(|k| h[(j, k)] * x_full[k])
                .sum::<f64>()
    });
    let lf = DVector::from_fn(nf, |r, _| p.lower[free[r]]);
    let uf = DVector::from_fn(nf, |r, _| p.upper[free[r]]);
    let m = p.num_inequalities();
    let gmat = DMatrix::from_fn(m, nf, |r, c| p.ineq_matrix[(r, free[c])]);
    let grhs = DVector::from_fn(m, |r, _| {
        p.ineq_rhs[r]
            - (0..n)
                .filter(|&k| fixed[k])
                .map(|k| p.ineq_matrix[(r, k)] * x_full[k])
                .sum::<f64>()
    });
    let rows = Rows::build(&lf, &uf, &gmat, &grhs);
    let n_fixed = n - nf;

    let finish = |x_free: &DVector<f64>, iterations: usize, status: QpStatus, working: usize| {
        let mut x = x_full.clone();
        for (r, &j) in free.iter().enumerate() {
            x[j] = x_free[r];
        }
        let kkt = kkt_residual(p, &x);
        let status = match status {
            QpStatus::Optimal if kkt >= settings.tol => QpStatus::MaxIter,
            s => s,
        };
        QpSolution {
            objective: p.objective(&x),
            x,
            iterations,
            status,
            kkt_residual: kkt,
            active_set_size: working + 2 * n_fixed,
        }
    };

    if nf == 0 {
        let status = if rows.max_violation(&DVector::zeros(0)) <= settings.tol {
            QpStatus::Optimal
        } else {
            QpStatus::Infeasible
        };
        return Ok(finish(&DVector::zeros(0), 0, status, 0));
    }

    let chol = Cholesky::new(hf.clone()).ok_or(Error::NotPositiveDefinite)?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b * b));
    if !(min_pivot > 1e-10) {
        return Err(Error::NotPositiveDefinite);
    }

    let clip = |v: &DVector<f64>| DVector::from_fn(nf, |r, _| v[r].clamp(lf[r], uf[r]));
    let mut start = None;
    if let Some(ws) = warm_start {
        if ws.len() != n {
            return Err(Error::Dimension(format!(
                "warm start has {} entries, expected {n}",
                ws.len()
            )));
        }
        let cand = clip(&DVector::from_fn(nf, |r, _| ws[free[r]]));
        if rows.max_violation(&cand) <= 1e-12 {
            start = Some(cand);
        }
    }
    if start.is_none() {
        let cand = clip(&DVector::zeros(nf));
        if rows.max_violation(&cand) <= 1e-12 {
            start = Some(cand);
        }
    }
    let start = match start {
        Some(s) => s,
        None => match phase_one(
            &rows,
            &lf,
            &uf,
            &clip(&DVector::zeros(nf)),
            settings.tol,
            settings.max_iter,
        ) {
            Some(s) => s,
            None => {
                return Ok(finish(
                    &clip(&DVector::zeros(nf)),
                    0,
                    QpStatus::Infeasible,
                    0,
                ))
            }
        },
    };

    let res = active_set(&chol, &gf, &rows, start, settings.tol, settings.max_iter);
    let status = if res.converged {
        QpStatus::Optimal
    } else {
        QpStatus::MaxIter
    };
    Ok(finish(&res.x, res.iterations, status, res.working.len()))
}

/// Non-negative least squares `min |C mu - d|`, `mu >= 0` (Lawson-Hanson).
fn nnls(c: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let k = c.ncols();
    let mut mu = DVector::zeros(k);
    if k == 0 {
        return mu;
    }
    let mut passive = vec![false; k];
    for _ in 0..(3 * k + 10) {
        let w = c.transpose() * (d - c * &mu);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if !passive[j] && w[j] > 1e-14 && best.is_none_or(|(_, b)| w[j] > b) {
                best = Some((j, w[j]));
            }
        }
        let Some((j, _)) = best else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let cp = DMatrix::from_fn(c.nrows(), idx.len(), |r, q| c[(r, idx[q])]);
            let z = cp
                .clone()
                .svd(true, true)
                .solve(d, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if z.iter().all(|&v| v > 0.0) {
                for (q, &i) in idx.iter().enumerate() {
                    mu[i] = z[q];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (q, &i) in idx.iter().enumerate() {
                if z[q] <= 0.0 {
                    alpha = alpha.min(mu[i] / (mu[i] - z[q]));
                }
            }
            for (q, &i) in idx.iter().enumerate() {
                mu[i] += alpha * (z[q] - mu[i]);
                if mu[i] <= 1e-15 {
                    mu[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    mu
}

/// First-order optimality residual at `x`: the max-norm of the gradient not
/// explained by non-negative multipliers of the (near-)active constraints,
/// plus the largest primal violation.
pub fn kkt_residual(p: &QpProblem, x: &DVector<f64>) -> f64 {
    let n = p.dim();
    let grad = &p.h * x + &p.g;
    let mut normals: Vec<DVector<f64>> = Vec::new();
    let active = |value: f64, bound: f64| value >= bound - 1e-9 * (1.0 + bound.abs());
    for j in 0..n {
        if p.upper[j].is_finite() && active(x[j], p.upper[j]) {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            normals.push(e);
        }
        if p.lower[j].is_finite() && active(-x[j], -p.lower[j]) {
            let mut e = DVector::zeros(n);
            e[j] = -1.0;
            normals.push(e);
        }
    }
    for i in 0..p.num_inequalities() {
        let row = p.ineq_matrix.row(i).transpose();
        if active(row.dot(x), p.ineq_rhs[i]) {
            normals.push(row);
        }
    }
    let stationarity = if normals.is_empty() {
        grad.amax()
    } else {
        let c = DMatrix::from_columns(&normals);
        let mu = nnls(&c, &(-&grad));
        (&grad + &c * &mu).amax()
    };
    stationarity + p.max_violation(x)
}

//! Dense two-phase bounded-variable simplex for
//! `min c.x  s.t.  A x = b, 0 <= x <= u`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PRIMAL_TOL: f64 = 1e-11;
// Relative size of the right-hand-side perturbation used in phase two.
const PERTURBATION: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    /// Row-major `rows x cols` constraint matrix.
    pub a: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Upper bounds, `f64::INFINITY` for none.
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        Self::with_upper(rows, cols, a, b, c, vec![f64::INFINITY; cols])
    }

    pub fn with_upper(
        rows: usize,
        cols: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Lp("no variables".into()));
        }
        if a.len() != rows * cols || b.len() != rows || c.len() != cols || upper.len() != cols {
            return Err(Error::Lp("inconsistent dimensions".into()));
        }
        if a.iter().chain(&b).chain(&c).any(|v| !v.is_finite()) || upper.iter().any(|u| !(*u >= 0.0)) {
            return Err(Error::Lp("non-finite data or negative bound".into()));
        }
        Ok(Self {
            a,
            rows,
            cols,
            b,
            c,
            upper,
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub value: f64,
    #[serde(skip)]
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `max |A x - b|` after refactorization.
    pub primal_residual: f64,
    /// Largest violation of the reduced-cost sign conditions.
    pub dual_residual: f64,
    /// `|c.x - (y.b + sum over variables at their upper bound of d_j u_j)|`.
    pub complementarity_residual: f64,
    /// Rows found to be linear combinations of others.
    pub redundant_rows: usize,
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    t: Vec<f64>,
    rows: usize,
    cols: usize,
    // phase-one matrix [signed A | I] and right-hand side, kept for reinversion
    orig: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    // value of the basic variable of each row
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
}

// Pivots between rebuilds of the tableau from the original data.
const REINVERT_EVERY: usize = 64;
// Consecutive degenerate pivots after which the entering rule switches
// from largest reduced cost to smallest index.
const DEGENERATE_STREAK: usize = 32;

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.cols..(i + 1) * self.cols]
    }

    fn set_costs(&mut self, c: Vec<f64>) {
        self.cost = c;
        self.refresh_costs();
    }

    fn refresh_costs(&mut self) {
        self.d = self.cost.clone();
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.d[j] -= cb * self.t[i * self.cols + j];
                }
            }
        }
    }

    /// Rebuilds `B^{-1} [A | I]`, the basic values and the reduced costs.
    fn reinvert(&mut self) -> Result<()> {
        let (m, cols) = (self.rows, self.cols);
        let mut bmat = vec![0.0; m * m];
        for (ci, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                bmat[r * m + ci] = self.orig[r * cols + j];
            }
        }
        let mut t = self.orig.clone();
        let mut rhs = self.rhs.clone();
        for j in 0..cols {
            if self.status[j] == Status::Upper {
                for r in 0..m {
                    rhs[r] -= self.orig[r * cols + j] * self.upper[j];
                }
            }
        }
        // Gauss-Jordan on [B | orig | rhs]
        for col in 0..m {
            let p = (col..m)
                .max_by(|&a, &b| bmat[a * m + col].abs().total_cmp(&bmat[b * m + col].abs()))
                .unwrap();
            if bmat[p * m + col].abs() < 1e-13 {
                return Err(Error::Lp("basis became singular".into()));
            }
            if p != col {
                for k in 0..m {
                    bmat.swap(p * m + k, col * m + k);
                }
                for k in 0..cols {
                    t.swap(p * cols + k, col * cols + k);
                }
                rhs.swap(p, col);
            }
            let inv = 1.0 / bmat[col * m + col];
            for k in 0..m {
                bmat[col * m + k] *= inv;
            }
            for k in 0..cols {
                t[col * cols + k] *= inv;
            }
            rhs[col] *= inv;
            for i in 0..m {
                let f = bmat[i * m + col];
                if i == col || f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    bmat[i * m + k] -= f * bmat[col * m + k];
                }
                for k in 0..cols {
                    t[i * cols + k] -= f * t[col * cols + k];
                }
                rhs[i] -= f * rhs[col];
            }
        }
        self.t = t;
        self.beta = rhs;
        for (i, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                self.t[r * cols + j] = if r == i { 1.0 } else { 0.0 };
            }
        }
        self.refresh_costs();
        Ok(())
    }

    /// Dual simplex on the columns `0..allowed`: restores primal
    /// feasibility while keeping the reduced costs optimal.
    fn dual_cleanup(&mut self, allowed: usize, max_iter: usize) -> Result<()> {
        loop {
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let u = self.upper[self.basis[i]];
                let v = if self.beta[i] < -PRIMAL_TOL {
                    -self.beta[i]
                } else if self.beta[i] > u + PRIMAL_TOL {
                    self.beta[i] - u
                } else {
                    0.0
                };
                if v > 0.0 && worst.is_none_or(|(_, w)| v > w) {
                    worst = Some((i, v));
                }
            }
            let Some((r, _)) = worst else {
                return Ok(());
            };
            if self.iterations >= max_iter {
                return Err(Error::Lp(format!("iteration limit {max_iter} reached")));
            }
            let below = self.beta[r] < 0.0;
            let target = if below { 0.0 } else { self.upper[self.basis[r]] };
            // entering column: keeps every reduced cost on its optimal side
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..allowed {
                let a = self.t[r * self.cols + j];
                let eligible = match self.status[j] {
                    Status::Lower if self.upper[j] > 0.0 => (below && a < -PIVOT_TOL) || (!below && a > PIVOT_TOL),
                    Status::Upper => (below && a > PIVOT_TOL) || (!below && a < -PIVOT_TOL),
                    _ => false,
                };
                if eligible {
                    let ratio = self.d[j].abs() / a.abs();
                    if enter.is_none_or(|(_, best)| ratio < best) {
                        enter = Some((j, ratio));
                    }
                }
            }
            let Some((j, _)) = enter else {
                return Err(Error::Lp("infeasible after perturbation cleanup".into()));
            };
            let step = (self.beta[r] - target) / self.t[r * self.cols + j];
            let start = if self.status[j] == Status::Upper { self.upper[j] } else { 0.0 };
            for i in 0..self.rows {
                self.beta[i] -= step * self.t[i * self.cols + j];
            }
            let leaving = self.basis[r];
            self.pivot(r, j);
            self.status[leaving] = if below { Status::Lower } else { Status::Upper };
            self.beta[r] = start + step;
            self.iterations += 1;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + j];
            if f != 0.0 {
                for (v, p) in self.t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.t[i * cols + j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.d[j] = 0.0;
        }
        self.status[self.basis[r]] = Status::Lower;
        self.basis[r] = j;
        self.status[j] = Status::Basic;
    }

    fn violation(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Lower if self.upper[j] > 0.0 => -self.d[j],
            Status::Upper => self.d[j],
            _ => 0.0,
        }
    }

    /// Iterates on the columns `0..allowed` until no reduced cost improves.
    /// Entering: largest reduced cost, or smallest index once pivots keep
    /// being degenerate. Leaving: minimum ratio, smallest index on ties.
    fn optimize(&mut self, allowed: usize, max_iter: usize) -> Result<()> {
        let mut streak = 0;
        let mut since_reinvert = 0;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Lp(format!("iteration limit {max_iter} reached")));
            }
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
                since_reinvert = 0;
            }
            let entering = if streak < DEGENERATE_STREAK {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..allowed {
                    let v = self.violation(j);
                    if v > COST_TOL && best.is_none_or(|(_, b)| v > b) {
                        best = Some((j, v));
                    }
                }
                best.map(|(j, _)| j)
            } else {
                (0..allowed).find(|&j| self.violation(j) > COST_TOL)
            };
            let Some(j) = entering else {
                if since_reinvert > 0 {
                    // confirm optimality on fresh data
                    self.reinvert()?;
                    since_reinvert = 0;
                    if (0..allowed).any(|j| self.violation(j) > COST_TOL) {
                        continue;
                    }
                }
                return Ok(());
            };
            let dir = if self.status[j] == Status::Lower { 1.0 } else { -1.0 };

            let mut theta = self.upper[j];
            let mut leave: Option<(usize, Status)> = None;
            for i in 0..self.rows {
                let alpha = dir * self.t[i * self.cols + j];
                let bvar = self.basis[i];
                let (limit, to) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, Status::Lower)
                } else if alpha < -PIVOT_TOL && self.upper[bvar].is_finite() {
                    ((self.upper[bvar] - self.beta[i]).max(0.0) / -alpha, Status::Upper)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if limit < theta - 1e-15 => true,
                    Some((r, _)) => limit <= theta + 1e-15 && bvar < self.basis[r],
                    None => false,
                };
                if better {
                    theta = limit;
                    leave = Some((i, to));
                }
            }
            if theta.is_infinite() {
                if since_reinvert > 0 {
                    self.reinvert()?;
                    since_reinvert = 0;
                    continue;
                }
                return Err(Error::Lp("objective unbounded below".into()));
            }
            self.iterations += 1;
            since_reinvert += 1;
            streak = if theta > 1e-12 { 0 } else { streak + 1 };
            for i in 0..self.rows {
                self.beta[i] -= dir * theta * self.t[i * self.cols + j];
            }
            match leave {
                None => {
                    // the entering variable reaches its other bound first
                    self.status[j] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                }
                Some((r, to)) => {
                    let entering_value = if dir > 0.0 { theta } else { self.upper[j] - theta };
                    let leaving = self.basis[r];
                    self.pivot(r, j);
                    self.status[leaving] = to;
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

// Solves the square system `m z = rhs` by Gaussian elimination with partial
// pivoting; `m` is row-major.
fn solve_dense(mut m: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let p = (col..n).max_by(|&a, &b| m[a * n + col].abs().total_cmp(&m[b * n + col].abs()))?;
        if m[p * n + col].abs() < 1e-14 {
            return None;
        }
        if p != col {
            for k in 0..n {
                m.swap(p * n + k, col * n + k);
            }
            rhs.swap(p, col);
        }
        for i in col + 1..n {
            let f = m[i * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[i * n + k] -= f * m[col * n + k];
                }
                rhs[i] -= f * rhs[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = rhs[col];
        for k in col + 1..n {
            s -= m[col * n + k] * rhs[k];
        }
        rhs[col] = s / m[col * n + col];
    }
    Some(rhs)
}

/// Solves the program; fails on infeasibility, unboundedness or when
/// `max_iter` pivots are exceeded.
pub fn solve(lp: &LinearProgram, max_iter: usize) -> Result<LpSolution> {
    let (m, n) = (lp.rows, lp.cols);
    let cols = n + m;
    // phase one: rows signed so that b >= 0, one artificial per row
    let mut t = vec![0.0; m * cols];
    let mut beta = vec![0.0; m];
    for i in 0..m {
        let s = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * cols + j] = s * lp.at(i, j);
        }
        t[i * cols + n + i] = 1.0;
        beta[i] = s * lp.b[i];
    }
    let mut status = vec![Status::Lower; cols];
    for s in status.iter_mut().skip(n) {
        *s = Status::Basic;
    }
    let mut upper = lp.upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut tab = Tableau {
        orig: t.clone(),
        rhs: beta.clone(),
        cost: Vec::new(),
        t,
        rows: m,
        cols,
        beta,
        basis: (n..n + m).collect(),
        status,
        upper,
        d: Vec::new(),
        iterations: 0,
    };
    let mut phase_one_cost = vec![0.0; cols];
    for c in phase_one_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    tab.set_costs(phase_one_cost);
    tab.optimize(cols, max_iter)?;
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.beta[i]).sum();
    let scale = 1.0 + lp.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return Err(Error::Lp(format!("infeasible (phase one residual {infeasibility:e})")));
    }

    // drive zero-level artificials out of the basis; rows where that is
    // impossible are redundant
    let mut redundant = Vec::new();
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        let col = (0..n).find(|&j| tab.status[j] != Status::Basic && tab.t[r * cols + j].abs() > PIVOT_TOL);
        match col {
            Some(j) => {
                let value = if tab.status[j] == Status::Upper { tab.upper[j] } else { 0.0 };
                tab.pivot(r, j);
                tab.beta[r] = value;
            }
            None => redundant.push(r),
        }
    }
    for &r in &redundant {
        // keep the artificial basic at zero and forbid it from moving
        tab.upper[tab.basis[r]] = 0.0;
    }
    for j in n..cols {
        if tab.status[j] != Status::Basic {
            tab.upper[j] = 0.0;
        }
    }

    // Shift the right-hand side so that the current basis becomes strictly
    // feasible; with a random shift later vertices are nondegenerate too,
    // which stops long runs of zero-length pivots.
    let true_rhs = tab.rhs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let size = PERTURBATION * (1.0 + lp.b.iter().map(|v| v.abs()).fold(0.0, f64::max));
    for i in 0..m {
        if redundant.contains(&i) {
            continue;
        }
        let j = tab.basis[i];
        let mut e = size * (0.5 + rng.random::<f64>());
        if tab.beta[i] + e > tab.upper[j] {
            e = if tab.beta[i] - e >= 0.0 { -e } else { 0.0 };
        }
        for r in 0..m {
            tab.rhs[r] += e * tab.orig[r * cols + j];
        }
    }
    tab.reinvert()?;

    let mut cost = lp.c.clone();
    cost.extend(std::iter::repeat_n(0.0, m));
    tab.set_costs(cost);
    tab.optimize(n, max_iter)?;
    tab.rhs = true_rhs;
    tab.reinvert()?;
    tab.dual_cleanup(n, max_iter)?;
    tab.optimize(n, max_iter)?;

    // refactorize from the original data
    let mut x = vec![0.0; n];
    for j in 0..n {
        if tab.status[j] == Status::Upper {
            x[j] = lp.upper[j];
        }
    }
    let kept: Vec<usize> = (0..m).filter(|r| !redundant.contains(r)).collect();
    let basic: Vec<usize> = kept.iter().map(|&r| tab.basis[r]).filter(|&j| j < n).collect();
    let k = kept.len();
    let mut y = vec![0.0; m];
    if basic.len() == k && k > 0 {
        let mut bmat = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (ri, &r) in kept.iter().enumerate() {
            rhs[ri] = lp.b[r] - (0..n).filter(|&j| tab.status[j] == Status::Upper).map(|j| lp.at(r, j) * x[j]).sum::<f64>();
            for (ci, &j) in basic.iter().enumerate() {
                bmat[ri * k + ci] = lp.at(r, j);
            }
        }
        if let Some(xb) = solve_dense(bmat.clone(), rhs) {
            for (ci, &j) in basic.iter().enumerate() {
                x[j] = xb[ci].clamp(0.0, lp.upper[j]);
            }
        } else {
            for (i, &j) in tab.basis.iter().enumerate() {
                if j < n {
                    x[j] = tab.beta[i].clamp(0.0, lp.upper[j]);
                }
            }
        }
        // y solves B^T y = c_B
        let mut bt = vec![0.0; k * k];
        for ri in 0..k {
            for ci in 0..k {
                bt[ci * k + ri] = bmat[ri * k + ci];
            }
        }
        let cb: Vec<f64> = basic.iter().map(|&j| lp.c[j]).collect();
        if let Some(yk) = solve_dense(bt, cb) {
            for (ri, &r) in kept.iter().enumerate() {
                y[r] = yk[ri];
            }
        }
    } else {
        for (i, &j) in tab.basis.iter().enumerate() {
            if j < n {
                x[j] = tab.beta[i].clamp(0.0, lp.upper[j]);
            }
        }
    }

    let primal_residual = (0..m)
        .map(|i| ((0..n).map(|j| lp.at(i, j) * x[j]).sum::<f64>() - lp.b[i]).abs())
        .fold(0.0, f64::max);
    let mut dual_residual: f64 = 0.0;
    let mut bound_term = 0.0;
    for j in 0..n {
        let dj = lp.c[j] - (0..m).map(|i| y[i] * lp.at(i, j)).sum::<f64>();
        let violation = match tab.status[j] {
            Status::Basic => dj.abs(),
            Status::Lower => (-dj).max(0.0),
            Status::Upper => {
                bound_term += dj * lp.upper[j];
                dj.max(0.0)
            }
        };
        dual_residual = dual_residual.max(violation);
    }
    let value: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let dual_value: f64 = y.iter().zip(&lp.b).map(|(y, b)| y * b).sum::<f64>() + bound_term;
    Ok(LpSolution {
        value,
        x,
        iterations: tab.iterations,
        primal_residual,
        dual_residual,
        complementarity_residual: (value - dual_value).abs(),
        redundant_rows: redundant.len(),
    })
}

//! Bounded-variable two-phase primal simplex with a dense basis inverse.
//!
//! Pivoting is Dantzig pricing with lowest-index tie-breaks; after a run of
//! degenerate steps the solver falls back to Bland's rule, which guarantees
//! termination. All loops run in fixed index order, so repeated solves of
//! the same problem produce bitwise identical results.

use super::{LpError, LpProblem, LpSolution, LpStatus, RowSense, Sense};

const PIVOT_TOL: f64 = 1e-10;
const RC_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;

#[derive(Clone, Copy, PartialEq, Eq)]
enum NbState {
    Basic,
    AtLower,
    AtUpper,
    FreeZero,
}

struct Tableau {
    m: usize,
    /// Structural + slack + artificial column count.
    n_total: usize,
    art_start: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    state: Vec<NbState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    feas_tol: f64,
}

pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    let m = p.rows.len();
    let n = p.vars.len();
    let negate = p.sense == Sense::Max;

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    for (i, row) in p.rows.iter().enumerate() {
        for &(v, c) in &row.terms {
            cols[v].push((i, c));
        }
    }
    let mut lower = Vec::with_capacity(n + m);
    let mut upper = Vec::with_capacity(n + m);
    let mut cost = Vec::with_capacity(n + m);
    for v in &p.vars {
        lower.push(v.lower);
        upper.push(v.upper);
        cost.push(if negate { -v.obj } else { v.obj });
    }
    for (i, row) in p.rows.iter().enumerate() {
        cols[n + i].push((i, 1.0));
        let (lo, hi) = match row.sense {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
        cost.push(0.0);
    }
    let rhs: Vec<f64> = p.rows.iter().map(|r| r.rhs).collect();
    let scale = rhs.iter().fold(1.0_f64, |a, b| a.max(b.abs()));

    let mut t = Tableau {
        m,
        n_total: n + m,
        art_start: n + m,
        cols,
        lower,
        upper,
        cost,
        rhs,
        x: vec![0.0; n + m],
        state: vec![NbState::AtLower; n + m],
        basis: (0..m).map(|i| n + i).collect(),
        binv: identity(m),
        pivots_since_refactor: 0,
        feas_tol: 1e-9 * scale,
    };

    // Nonbasic initial point: finite lower, else finite upper, else zero.
    for j in 0..t.n_total {
        let (lo, hi) = (t.lower[j], t.upper[j]);
        let (v, s) = if lo.is_finite() {
            (lo, NbState::AtLower)
        } else if hi.is_finite() {
            (hi, NbState::AtUpper)
        } else {
            (0.0, NbState::FreeZero)
        };
        t.x[j] = v;
        t.state[j] = s;
    }
    for r in 0..m {
        t.state[t.basis[r]] = NbState::Basic;
    }
    t.recompute_basics();

    // Phase 1: pin out-of-bound slacks and cover residuals with artificials.
    let mut true_cost = std::mem::take(&mut t.cost);
    t.cost = vec![0.0; t.n_total];
    let mut needs_phase1 = false;
    for r in 0..m {
        let s = t.basis[r];
        let v = t.x[s];
        let (lo, hi) = (t.lower[s], t.upper[s]);
        if v < lo - t.feas_tol || v > hi + t.feas_tol {
            let pin = v.clamp(lo, hi);
            t.x[s] = pin;
            t.state[s] = if pin == lo { NbState::AtLower } else { NbState::AtUpper };
            let residual = v - pin;
            let sigma = residual.signum();
            let art = t.n_total;
            t.cols.push(vec![(r, sigma)]);
            t.lower.push(0.0);
            t.upper.push(f64::INFINITY);
            t.cost.push(1.0);
            true_cost.push(0.0);
            t.x.push(residual.abs());
            t.state.push(NbState::Basic);
            t.basis[r] = art;
            t.n_total += 1;
            needs_phase1 = true;
        }
    }

    if needs_phase1 {
        // The basis now mixes slacks and artificial columns (some with
        // coefficient -1); rebuild the inverse before iterating.
        t.refactor()?;
        match t.optimize()? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Err(LpError::Numerical("phase 1 unbounded".into()));
            }
        }
        let infeas: f64 = (t.art_start..t.n_total).map(|j| t.x[j]).sum();
        if infeas > 10.0 * t.feas_tol {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: t.x[..n].to_vec(),
                duals: vec![0.0; m],
                reduced_costs: vec![0.0; n],
                objective: f64::NAN,
            });
        }
        t.evict_artificials();
        for j in t.art_start..t.n_total {
            t.lower[j] = 0.0;
            t.upper[j] = 0.0;
            t.x[j] = 0.0;
        }
    }

    // Phase 2 with the real costs.
    t.cost = true_cost;
    let status = match t.optimize()? {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
    };

    // Certificates from the final basis.
    let y_int = t.duals();
    let mut duals = vec![0.0; m];
    let mut reduced = vec![0.0; n];
    for i in 0..m {
        duals[i] = if negate { -y_int[i] } else { y_int[i] };
    }
    for j in 0..n {
        if t.state[j] == NbState::Basic {
            reduced[j] = 0.0;
        } else {
            let rc_int = t.cost[j] - t.cols[j].iter().map(|&(i, a)| y_int[i] * a).sum::<f64>();
            reduced[j] = if negate { -rc_int } else { rc_int };
        }
    }
    let x = t.x[..n].to_vec();
    let objective = if status == LpStatus::Optimal {
        p.objective_at(&x)
    } else {
        f64::NAN
    };
    Ok(LpSolution {
        status,
        x,
        duals,
        reduced_costs: reduced,
        objective,
    })
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for j in 0..self.n_total {
            if self.state[j] != NbState::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    resid[i] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[r * m + i] * resid[i];
            }
            self.x[self.basis[r]] = v;
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan inverse of the basis matrix with partial pivoting.
        let mut a = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, c) in &self.cols[j] {
                a[i * m + r] = c;
            }
        }
        let mut inv = identity(m);
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(LpError::Numerical(format!(
                    "singular basis during refactorization (column {col}, pivot {piv_val:.3e})"
                )));
            }
            if piv_row != col {
                for k in 0..m {
                    a.swap(col * m + k, piv_row * m + k);
                    inv.swap(col * m + k, piv_row * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for i in 0..m {
                    y[i] += cb * self.binv[r * m + i];
                }
            }
        }
        y
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            if a != 0.0 {
                for r in 0..m {
                    w[r] += self.binv[r * m + i] * a;
                }
            }
        }
        w
    }

    fn optimize(&mut self) -> Result<Outcome, LpError> {
        let iter_cap = 200 * (self.m + self.n_total) + 20_000;
        let mut bland = false;
        let mut degenerate_run = 0usize;
        for _iter in 0..iter_cap {
            let y = self.duals();
            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..self.n_total {
                let st = self.state[j];
                if st == NbState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let rc = self.cost[j]
                    - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>();
                let (eligible, dir) = match st {
                    NbState::AtLower => (rc < -RC_TOL, 1.0),
                    NbState::AtUpper => (rc > RC_TOL, -1.0),
                    NbState::FreeZero => {
                        if rc < -RC_TOL {
                            (true, 1.0)
                        } else {
                            (rc > RC_TOL, -1.0)
                        }
                    }
                    NbState::Basic => unreachable!(),
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dir, rc.abs()));
                    break;
                }
                match entering {
                    Some((_, _, best)) if rc.abs() <= best => {}
                    _ => entering = Some((j, dir, rc.abs())),
                }
            }
            let Some((j, dir, _)) = entering else {
                return Ok(Outcome::Optimal);
            };

            // Ratio test.
            let w = self.ftran(j);
            let own_span = self.upper[j] - self.lower[j];
            let mut t_best = if own_span.is_finite() { own_span } else { f64::INFINITY };
            let mut leave: Option<usize> = None;
            let mut leave_to_upper = false;
            for r in 0..self.m {
                let k = self.basis[r];
                let delta = -dir * w[r];
                if delta > PIVOT_TOL {
                    if self.upper[k].is_finite() {
                        let limit = ((self.upper[k] - self.x[k]) / delta).max(0.0);
                        if better_ratio(limit, t_best, leave, r, &w, &self.basis, bland) {
                            t_best = limit;
                            leave = Some(r);
                            leave_to_upper = true;
                        }
                    }
                } else if delta < -PIVOT_TOL && self.lower[k].is_finite() {
                    let limit = ((self.lower[k] - self.x[k]) / delta).max(0.0);
                    if better_ratio(limit, t_best, leave, r, &w, &self.basis, bland) {
                        t_best = limit;
                        leave = Some(r);
                        leave_to_upper = false;
                    }
                }
            }
            if t_best.is_infinite() {
                return Ok(Outcome::Unbounded);
            }

            if t_best <= PIVOT_TOL {
                degenerate_run += 1;
                if degenerate_run > 2 * self.m + 50 {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            // Move.
            self.x[j] += dir * t_best;
            for r in 0..self.m {
                let k = self.basis[r];
                self.x[k] -= dir * t_best * w[r];
            }
            match leave {
                None => {
                    // Bound flip.
                    self.state[j] = match self.state[j] {
                        NbState::AtLower => {
                            self.x[j] = self.upper[j];
                            NbState::AtUpper
                        }
                        NbState::AtUpper => {
                            self.x[j] = self.lower[j];
                            NbState::AtLower
                        }
                        other => other,
                    };
                }
                Some(r) => {
                    let k = self.basis[r];
                    if w[r].abs() < PIVOT_TOL {
                        self.refactor()?;
                        continue;
                    }
                    self.x[k] = if leave_to_upper { self.upper[k] } else { self.lower[k] };
                    self.state[k] =
                        if leave_to_upper { NbState::AtUpper } else { NbState::AtLower };
                    self.state[j] = NbState::Basic;
                    self.basis[r] = j;
                    self.update_binv(r, &w);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        self.refactor()?;
                    }
                }
            }
        }
        Err(LpError::Numerical(format!(
            "iteration limit exceeded ({} rows, {} columns)",
            self.m, self.n_total
        )))
    }

    fn update_binv(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let piv = w[r];
        for i in 0..m {
            self.binv[r * m + i] /= piv;
        }
        for k in 0..m {
            if k != r && w[k] != 0.0 {
                let f = w[k];
                for i in 0..m {
                    self.binv[k * m + i] -= f * self.binv[r * m + i];
                }
            }
        }
    }

    /// Pivots basic artificials out after phase 1, or pins them when their
    /// rows are linearly dependent.
    fn evict_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let mut row = vec![0.0; m];
            row.copy_from_slice(&self.binv[r * m..(r + 1) * m]);
            let mut found = None;
            for j in 0..self.art_start {
                if self.state[j] == NbState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let wrj: f64 = self.cols[j].iter().map(|&(i, a)| row[i] * a).sum();
                if wrj.abs() > 1e-7 {
                    found = Some(j);
                    break;
                }
            }
            if let Some(j) = found {
                let w = self.ftran(j);
                let art = self.basis[r];
                self.state[art] = NbState::AtLower;
                self.x[art] = 0.0;
                self.state[j] = NbState::Basic;
                self.basis[r] = j;
                self.update_binv(r, &w);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn better_ratio(
    limit: f64,
    best: f64,
    current: Option<usize>,
    row: usize,
    w: &[f64],
    basis: &[usize],
    bland: bool,
) -> bool {
    if limit < best - 1e-12 {
        return true;
    }
    if limit > best + 1e-12 {
        return false;
    }
    match current {
        None => true,
        Some(r0) => {
            if bland {
                basis[row] < basis[r0]
            } else {
                // Stability first, then lowest row for determinism.
                let (a, b) = (w[row].abs(), w[r0].abs());
                a > b + 1e-12 || ((a - b).abs() <= 1e-12 && row < r0)
            }
        }
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    v
}

//! Linear programs with simultaneous primal and dual certificates.
//!
//! The solver is a bounded-variable two-phase primal simplex with a dense
//! basis inverse, Dantzig pricing with a Bland's-rule fallback, and
//! deterministic tie-breaking throughout: identical inputs produce bitwise
//! identical solutions.

mod export;
mod market;
mod simplex;

pub use export::write_lp_format;
pub use market::{
    build_ll_dual, build_ll_primal, clear_market, strong_duality_gap, MarketError,
};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub type VarId = usize;
pub type RowId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
    /// Sorted by variable id, one entry per variable.
    pub terms: Vec<(VarId, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Constant added to the objective value.
    pub obj_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal-dual certificate. Duals satisfy `reduced_cost = obj - A' dual` in
/// the problem's own objective sense; at optimality basic variables have
/// zero reduced cost and `objective = dual'rhs + sum(rc_j x_j)` holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            obj_offset: 0.0,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            obj,
        });
        self.vars.len() - 1
    }

    /// Adds a row, merging duplicate variable references.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        sense: RowSense,
        rhs: f64,
        terms: Vec<(VarId, f64)>,
    ) -> RowId {
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        let mut sorted = terms;
        sorted.sort_by_key(|&(v, _)| v);
        for (v, c) in sorted {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.rows.push(Row {
            name: name.into(),
            sense,
            rhs,
            terms: merged,
        });
        self.rows.len() - 1
    }

    pub fn fix_var(&mut self, v: VarId, value: f64) {
        self.vars[v].lower = value;
        self.vars[v].upper = value;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let mut names: HashMap<&str, ()> = HashMap::with_capacity(self.vars.len());
        for v in &self.vars {
            if !v.obj.is_finite() {
                return Err(LpError::Invalid(format!("objective of {} not finite", v.name)));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::Invalid(format!(
                    "bounds of {} invalid: [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if names.insert(&v.name, ()).is_some() {
                return Err(LpError::Invalid(format!("duplicate variable name {}", v.name)));
            }
        }
        let mut row_names: HashMap<&str, ()> = HashMap::with_capacity(self.rows.len());
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(LpError::Invalid(format!("rhs of {} not finite", r.name)));
            }
            for &(v, c) in &r.terms {
                if v >= self.vars.len() || !c.is_finite() {
                    return Err(LpError::Invalid(format!("bad term in row {}", r.name)));
                }
            }
            if row_names.insert(&r.name, ()).is_some() {
                return Err(LpError::Invalid(format!("duplicate row name {}", r.name)));
            }
        }
        Ok(())
    }

    /// Solves the problem, returning status, point and certificates.
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.validate()?;
        simplex::solve(self)
    }

    /// Objective value of an arbitrary point (ignores feasibility).
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.obj_offset
            + self
                .vars
                .iter()
                .zip(x)
                .map(|(v, xi)| v.obj * xi)
                .sum::<f64>()
    }

    /// Signed row activity minus rhs; positive means above the rhs.
    pub fn row_activity(&self, row: RowId, x: &[f64]) -> f64 {
        let r = &self.rows[row];
        r.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() - r.rhs
    }

    /// Largest constraint or bound violation at a point.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for rid in 0..self.rows.len() {
            let act = self.row_activity(rid, x);
            let viol = match self.rows[rid].sense {
                RowSense::Le => act,
                RowSense::Ge => -act,
                RowSense::Eq => act.abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_variable_market() {
        // max -10 g subject to g = 5, 0 <= g <= 5.
        let mut lp = LpProblem::new(Sense::Max);
        let g = lp.add_var("g", 0.0, 5.0, -10.0);
        lp.add_row("demand", RowSense::Eq, 5.0, vec![(g, 1.0)]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 5.0);
        assert_relative_eq!(sol.objective, -50.0);
        assert_relative_eq!(sol.duals[0], -10.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_demand() {
        let mut lp = LpProblem::new(Sense::Max);
        let g = lp.add_var("g", 0.0, 5.0, -10.0);
        lp.add_row("demand", RowSense::Eq, 10.0, vec![(g, 1.0)]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
        lp.add_row("r", RowSense::Ge, -1.0, vec![(x, 1.0), (y, -1.0)]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_vars_and_senses() {
        // min 2x + 3y st x + y >= 4, x - y <= 2, -1 <= x <= 3, 0 <= y <= 5.
        let mut lp = LpProblem::new(Sense::Min);
        let x = lp.add_var("x", -1.0, 3.0, 2.0);
        let y = lp.add_var("y", 0.0, 5.0, 3.0);
        lp.add_row("r1", RowSense::Ge, 4.0, vec![(x, 1.0), (y, 1.0)]);
        lp.add_row("r2", RowSense::Le, 2.0, vec![(x, 1.0), (y, -1.0)]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // Optimum at x = 3, y = 1 with value 9.
        assert_relative_eq!(sol.x[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.objective, 9.0, epsilon = 1e-9);
        // Duality identity: obj = y'b + sum rc_j x_j.
        let dual_val: f64 = sol.duals[0] * 4.0
            + sol.duals[1] * 2.0
            + sol.reduced_costs[0] * sol.x[0]
            + sol.reduced_costs[1] * sol.x[1];
        assert_relative_eq!(sol.objective, dual_val, epsilon = 1e-8);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + 2y st x + y = 3, x - y = 1 with both free: x = 2, y = 1.
        let mut lp = LpProblem::new(Sense::Min);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 2.0);
        lp.add_row("r1", RowSense::Eq, 3.0, vec![(x, 1.0), (y, 1.0)]);
        lp.add_row("r2", RowSense::Eq, 1.0, vec![(x, 1.0), (y, -1.0)]);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_terms_merge() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 10.0, 1.0);
        lp.add_row("r", RowSense::Le, 6.0, vec![(x, 1.0), (x, 2.0)]);
        let sol = lp.solve().unwrap();
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_resolve() {
        let mut lp = LpProblem::new(Sense::Min);
        for i in 0..6 {
            lp.add_var(format!("x{}", i), 0.0, 10.0, (i as f64) - 2.5);
        }
        lp.add_row("r1", RowSense::Ge, 5.0, (0..6).map(|i| (i, 1.0)).collect());
        lp.add_row("r2", RowSense::Le, 12.0, (0..6).map(|i| (i, ((i % 3) + 1) as f64)).collect());
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.duals, b.duals);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}

//! Bilinear quadratic programs: a linear program plus products of variables
//! from two disjoint blocks, in the objective and in constraint rows.
//! Fixing either block makes the remainder an LP, which is what the
//! alternating multi-start solver exploits; the McCormick relaxation and the
//! spatial branch-and-bound provide certified bounds.

mod bnb;
mod mccormick;
mod multistart;

pub use bnb::{spatial_branch_and_bound, BnbOptions};
pub use mccormick::mccormick_relax;
pub use multistart::{solve_multistart, MultistartOptions, StartTrajectory};

use crate::lp::{LpProblem, RowId, Sense, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    A,
    B,
}

/// coef * a * b with `a` in block A and `b` in block B.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub coef: f64,
    pub a: VarId,
    pub b: VarId,
}

#[derive(Debug, Error)]
pub enum BilinearError {
    #[error("bilinear term {0} x {1} does not span the two blocks")]
    TermWithinBlock(String, String),
    #[error("variable {0} participates in a product but has no finite box")]
    UnboundedVar(String),
    #[error("all {starts} starts infeasible; most feasible start violates by {residual:.3e} ({detail})")]
    AllStartsInfeasible {
        starts: usize,
        residual: f64,
        detail: String,
    },
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

#[derive(Debug, Clone)]
pub struct BilinearProgram {
    pub lp: LpProblem,
    pub blocks: Vec<Block>,
    pub obj_terms: Vec<BilinearTerm>,
    /// Bilinear terms attached to rows, parallel to `lp.rows`.
    pub row_terms: Vec<Vec<BilinearTerm>>,
}

impl BilinearProgram {
    /// Wraps a linear program; `blocks` assigns every variable to a block.
    pub fn new(lp: LpProblem, blocks: Vec<Block>) -> Self {
        assert_eq!(lp.num_vars(), blocks.len());
        let rows = lp.num_rows();
        BilinearProgram {
            lp,
            blocks,
            obj_terms: Vec::new(),
            row_terms: vec![Vec::new(); rows],
        }
    }

    fn normalize(&self, coef: f64, x: VarId, y: VarId) -> Result<BilinearTerm, BilinearError> {
        match (self.blocks[x], self.blocks[y]) {
            (Block::A, Block::B) => Ok(BilinearTerm { coef, a: x, b: y }),
            (Block::B, Block::A) => Ok(BilinearTerm { coef, a: y, b: x }),
            _ => Err(BilinearError::TermWithinBlock(
                self.lp.vars[x].name.clone(),
                self.lp.vars[y].name.clone(),
            )),
        }
    }

    /// Adds coef * x * y to the objective. The two variables must lie in
    /// different blocks.
    pub fn add_obj_term(&mut self, coef: f64, x: VarId, y: VarId) -> Result<(), BilinearError> {
        if coef == 0.0 {
            return Ok(());
        }
        let term = self.normalize(coef, x, y)?;
        self.obj_terms.push(term);
        Ok(())
    }

    /// Adds coef * x * y to a constraint row.
    pub fn add_row_term(
        &mut self,
        row: RowId,
        coef: f64,
        x: VarId,
        y: VarId,
    ) -> Result<(), BilinearError> {
        if coef == 0.0 {
            return Ok(());
        }
        let term = self.normalize(coef, x, y)?;
        self.row_terms[row].push(term);
        Ok(())
    }

    /// Rows that carry bilinear terms; these get elastic slacks during the
    /// alternating descent.
    pub fn coupled_rows(&self) -> Vec<RowId> {
        (0..self.lp.num_rows())
            .filter(|&r| !self.row_terms[r].is_empty())
            .collect()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let mut v = self.lp.objective_at(x);
        for t in &self.obj_terms {
            v += t.coef * x[t.a] * x[t.b];
        }
        v
    }

    fn row_bilinear_at(&self, row: RowId, x: &[f64]) -> f64 {
        self.row_terms[row]
            .iter()
            .map(|t| t.coef * x[t.a] * x[t.b])
            .sum()
    }

    /// Signed violation of one row including its bilinear part.
    pub fn row_violation(&self, row: RowId, x: &[f64]) -> f64 {
        let act = self.lp.row_activity(row, x) + self.row_bilinear_at(row, x);
        match self.lp.rows[row].sense {
            crate::lp::RowSense::Le => act,
            crate::lp::RowSense::Ge => -act,
            crate::lp::RowSense::Eq => act.abs(),
        }
    }

    /// Largest violation over rows (with products) and variable bounds.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.lp.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for r in 0..self.lp.num_rows() {
            worst = worst.max(self.row_violation(r, x));
        }
        worst
    }

    /// Effective sampling/branching box of a variable: its LP bounds.
    pub fn boxed(&self, v: VarId) -> (f64, f64) {
        (self.lp.vars[v].lower, self.lp.vars[v].upper)
    }

    /// The LP obtained by pinning one block at given values and folding the
    /// bilinear terms into coefficients of the other block.
    pub fn fix_block(&self, fixed: Block, x: &[f64]) -> LpProblem {
        let mut lp = self.lp.clone();
        for v in 0..lp.num_vars() {
            if self.blocks[v] == fixed {
                let val = x[v].clamp(lp.vars[v].lower, lp.vars[v].upper);
                lp.vars[v].lower = val;
                lp.vars[v].upper = val;
            }
        }
        for t in &self.obj_terms {
            let (pinned, live) = match fixed {
                Block::A => (t.a, t.b),
                Block::B => (t.b, t.a),
            };
            lp.vars[live].obj += t.coef * lp.vars[pinned].lower;
        }
        for (r, terms) in self.row_terms.iter().enumerate() {
            for t in terms {
                let (pinned, live) = match fixed {
                    Block::A => (t.a, t.b),
                    Block::B => (t.b, t.a),
                };
                let c = t.coef * lp.vars[pinned].lower;
                if c != 0.0 {
                    merge_term(&mut lp.rows[r].terms, live, c);
                }
            }
        }
        lp
    }

    /// Scale for feasibility tolerances: the largest |rhs| plus one.
    pub fn scale(&self) -> f64 {
        self.lp
            .rows
            .iter()
            .fold(1.0_f64, |a, r| a.max(r.rhs.abs()))
    }
}

pub(crate) fn merge_term(terms: &mut Vec<(VarId, f64)>, v: VarId, c: f64) {
    match terms.binary_search_by_key(&v, |&(id, _)| id) {
        Ok(i) => terms[i].1 += c,
        Err(i) => terms.insert(i, (v, c)),
    }
}

/// Outcome of a multi-start or branch-and-bound solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub best_objective: f64,
    pub best_point: Vec<f64>,
    pub trajectories: Vec<StartTrajectory>,
    /// Upper bound (max sense) from a relaxation, when one was computed.
    pub relaxation_bound: Option<f64>,
    /// (bound - best)/max(1, |best|) when a bound is available.
    pub certified_gap: Option<f64>,
    /// False when a node or iteration budget stopped the search early.
    pub converged: bool,
}

/// Deterministic tie-break between equally good incumbents.
pub(crate) fn lexicographically_smaller(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpProblem, Sense};

    #[test]
    fn terms_must_span_blocks() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 1.0, 0.0);
        let y = lp.add_var("y", 0.0, 1.0, 0.0);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::A]);
        assert!(bp.add_obj_term(1.0, x, y).is_err());
    }

    #[test]
    fn objective_includes_products() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 1.0, 2.0);
        let y = lp.add_var("y", 0.0, 1.0, 0.0);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_obj_term(3.0, y, x).unwrap();
        assert_eq!(bp.objective_at(&[0.5, 0.5]), 2.0 * 0.5 + 3.0 * 0.25);
    }
}

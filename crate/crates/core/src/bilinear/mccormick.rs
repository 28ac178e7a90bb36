//! McCormick envelope relaxation: every product w = x*y over a box is
//! replaced by its four envelope inequalities, giving an LP whose optimum
//! bounds the bilinear optimum.

use super::{BilinearError, BilinearProgram};
use crate::lp::{LpProblem, RowSense, VarId};

/// Distinct products appearing anywhere in the program, in first-appearance
/// order.
pub(crate) fn collect_products(bp: &BilinearProgram) -> Vec<(VarId, VarId)> {
    let mut products: Vec<(VarId, VarId)> = Vec::new();
    let mut push = |a: VarId, b: VarId| {
        if !products.contains(&(a, b)) {
            products.push((a, b));
        }
    };
    for t in &bp.obj_terms {
        push(t.a, t.b);
    }
    for terms in &bp.row_terms {
        for t in terms {
            push(t.a, t.b);
        }
    }
    products
}

/// Builds the envelope relaxation. Every participating variable needs a
/// finite box (its LP bounds); otherwise the envelope does not exist.
pub fn mccormick_relax(bp: &BilinearProgram) -> Result<LpProblem, BilinearError> {
    let products = collect_products(bp);
    for &(a, b) in &products {
        for v in [a, b] {
            let (lo, hi) = bp.boxed(v);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(BilinearError::UnboundedVar(bp.lp.vars[v].name.clone()));
            }
        }
    }

    let mut lp = bp.lp.clone();
    let w: Vec<VarId> = products
        .iter()
        .map(|&(a, b)| {
            let (la, ua) = bp.boxed(a);
            let (lb, ub) = bp.boxed(b);
            // The envelope rows below imply bounds on w; the corner products
            // give valid explicit ones, which keeps the LP well-scaled.
            let corners = [la * lb, la * ub, ua * lb, ua * ub];
            let lo = corners.iter().fold(f64::INFINITY, |m, &c| m.min(c));
            let hi = corners.iter().fold(f64::NEG_INFINITY, |m, &c| m.max(c));
            lp.add_var(
                format!("__w_{}_{}", bp.lp.vars[a].name, bp.lp.vars[b].name),
                lo,
                hi,
                0.0,
            )
        })
        .collect();

    for (k, &(a, b)) in products.iter().enumerate() {
        let (la, ua) = bp.boxed(a);
        let (lb, ub) = bp.boxed(b);
        let wk = w[k];
        // w >= la*y + lb*x - la*lb
        lp.add_row(
            format!("__mc1_{k}"),
            RowSense::Ge,
            -la * lb,
            vec![(wk, 1.0), (b, -la), (a, -lb)],
        );
        // w >= ua*y + ub*x - ua*ub
        lp.add_row(
            format!("__mc2_{k}"),
            RowSense::Ge,
            -ua * ub,
            vec![(wk, 1.0), (b, -ua), (a, -ub)],
        );
        // w <= ua*y + lb*x - ua*lb
        lp.add_row(
            format!("__mc3_{k}"),
            RowSense::Le,
            -ua * lb,
            vec![(wk, 1.0), (b, -ua), (a, -lb)],
        );
        // w <= la*y + ub*x - la*ub
        lp.add_row(
            format!("__mc4_{k}"),
            RowSense::Le,
            -la * ub,
            vec![(wk, 1.0), (b, -la), (a, -ub)],
        );
    }

    // Substitute w for the products in the objective and in rows.
    for t in &bp.obj_terms {
        let k = products.iter().position(|&p| p == (t.a, t.b)).unwrap();
        lp.vars[w[k]].obj += t.coef;
    }
    for (r, terms) in bp.row_terms.iter().enumerate() {
        for t in terms {
            let k = products.iter().position(|&p| p == (t.a, t.b)).unwrap();
            super::merge_term(&mut lp.rows[r].terms, w[k], t.coef);
        }
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilinear::{Block, BilinearProgram};
    use crate::lp::{LpProblem, Sense};
    use approx::assert_relative_eq;

    fn product_box(la: f64, ua: f64, lb: f64, ub: f64) -> BilinearProgram {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", la, ua, 0.0);
        let y = lp.add_var("y", lb, ub, 0.0);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_obj_term(1.0, x, y).unwrap();
        bp
    }

    #[test]
    fn unit_box_relaxation_is_tight_at_corner() {
        let bp = product_box(0.0, 1.0, 0.0, 1.0);
        let rel = mccormick_relax(&bp).unwrap();
        let sol = rel.solve().unwrap();
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_box_peaks_at_one() {
        let bp = product_box(-1.0, 1.0, -1.0, 1.0);
        let rel = mccormick_relax(&bp).unwrap();
        let sol = rel.solve().unwrap();
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_box_collapses_to_exact_product() {
        // x in [c, c]: the envelope forces w = c*y exactly.
        let c = 0.7;
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", c, c, 0.0);
        let y = lp.add_var("y", -2.0, 3.0, -0.1);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_obj_term(1.0, x, y).unwrap();
        let rel = mccormick_relax(&bp).unwrap();
        let sol = rel.solve().unwrap();
        // max 0.7y - 0.1y over y in [-2, 3] is 0.6 * 3.
        assert_relative_eq!(sol.objective, 1.8, epsilon = 1e-9);
        let _ = (x, y);
    }

    #[test]
    fn unbounded_participant_is_rejected() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, f64::INFINITY, 0.0);
        let y = lp.add_var("y", 0.0, 1.0, 0.0);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_obj_term(1.0, x, y).unwrap();
        assert!(matches!(
            mccormick_relax(&bp),
            Err(BilinearError::UnboundedVar(_))
        ));
    }
}
